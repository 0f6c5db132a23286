#include "difache/bench/experiment.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <memory>
#include <stdexcept>
#include <unordered_map>

#include "difache/baselines/nocache.hpp"
#include "difache/bench/versioned.hpp"

namespace difache::bench {

Coherence parse_coherence(const std::string& s) {
  if (s == "difache") return Coherence::kDifache;
  if (s == "difache-noac") return Coherence::kDifacheNoac;
  if (s == "cmcache") return Coherence::kCmcache;
  if (s == "nocache") return Coherence::kNocache;
  throw std::invalid_argument("unknown coherence mode: " + s);
}

const char* to_string(Coherence c) {
  switch (c) {
    case Coherence::kDifache: return "difache";
    case Coherence::kDifacheNoac: return "difache-noac";
    case Coherence::kCmcache: return "cmcache";
    case Coherence::kNocache: return "nocache";
  }
  return "?";
}

namespace {

std::uint64_t align8(std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; }

// Placement of every object on the MNs, striped round-robin.
class ObjectTable {
 public:
  ObjectTable(std::uint64_t count, std::uint32_t size, int mns, const MnLayout& layout)
      : count_(count), uniform_(size), mns_(mns), layout_(layout) {
    check(64 + (count / static_cast<std::uint64_t>(mns) + 1) * align8(size));
  }
  ObjectTable(std::vector<std::uint32_t> sizes, int mns, const MnLayout& layout)
      : count_(sizes.size()), mns_(mns), layout_(layout), sizes_(std::move(sizes)) {
    std::vector<std::uint64_t> next(static_cast<std::size_t>(mns), kFirstObjectOffset);
    offsets_.resize(count_);
    for (std::uint64_t i = 0; i < count_; ++i) {
      auto& n = next[i % static_cast<std::uint64_t>(mns)];
      offsets_[i] = n;
      n += align8(sizes_[i]);
    }
    for (auto n : next) check(n);
  }

  std::uint64_t count() const { return count_; }
  std::uint16_t mn(std::uint64_t i) const {
    return static_cast<std::uint16_t>(i % static_cast<std::uint64_t>(mns_));
  }
  std::uint32_t size(std::uint64_t i) const { return sizes_.empty() ? uniform_ : sizes_[i]; }
  RemoteAddr addr(std::uint64_t i) const {
    std::uint64_t off = offsets_.empty()
                            ? kFirstObjectOffset + (i / static_cast<std::uint64_t>(mns_)) * align8(uniform_)
                            : offsets_[i];
    return {NodeId::mn(mn(i)), off};
  }
  RemoteAddr lock(std::uint64_t i) const {
    return {NodeId::mn(mn(i)), layout_.app_lock_base + 8 * (i / static_cast<std::uint64_t>(mns_))};
  }

 private:
  void check(std::uint64_t end) const {
    if (end > layout_.mode_lock_base) throw ConfigError("objects do not fit below the metadata area");
  }

  std::uint64_t count_;
  std::uint32_t uniform_ = 0;
  int mns_;
  MnLayout layout_;
  std::vector<std::uint32_t> sizes_;
  std::vector<std::uint64_t> offsets_;
};

class Run;

struct Client {
  int gid = 0;
  std::uint16_t cn = 0;
  Worker worker;
  std::unique_ptr<SyntheticStream> stream;
  const std::vector<Op>* trace_ops = nullptr;
  std::size_t trace_pos = 0;
  std::vector<std::byte> buf, img;

  bool next(Op& op) {
    if (trace_ops) {
      if (trace_pos >= trace_ops->size()) return false;
      op = (*trace_ops)[trace_pos++];
      return true;
    }
    if (stream->remaining() == 0) return false;
    op = stream->next();
    return true;
  }
};

class Run {
 public:
  explicit Run(const ExperimentConfig& cfg) : cfg_(cfg) {
    cfg_.workload.validate();
    if (cfg_.mns <= 0) throw std::invalid_argument("need at least one MN");
    if (cfg_.deterministic) {
      sim::SimOptions so;
      so.seed = cfg_.workload.seed;
      ex_ = std::make_unique<sim::SimExecutor>(so);
    } else {
      ex_ = std::make_unique<sim::ThreadExecutor>();
    }
    fabric::FabricConfig fc = cfg_.fabric;
    fc.seed = fc.seed ^ cfg_.workload.seed;
    fab_ = std::make_unique<fabric::Fabric>(*ex_, fc);
    if (cfg_.fabric_trace) fab_->set_trace(cfg_.fabric_trace);
    for (int m = 0; m < cfg_.mns; ++m)
      fab_->add_node(NodeId::mn(static_cast<std::uint16_t>(m)), layout_.region_size);
    coord_ = std::make_unique<coord::Coordinator>(*ex_, *fab_, layout_, cfg_.coord);
    coord_->add_listener([this](NodeId n, coord::NodeEvent e) { on_node_event(n, e); });
    for (int m = 0; m < cfg_.mns; ++m) coord_->add_mn(static_cast<std::uint16_t>(m));

    metrics_.bin = cfg_.timeline_bin;
    history_.set_enabled(cfg_.record_history);
    build_objects();
    build_engines();
    coord_->start();
    build_clients();
  }

  ExperimentResult execute() {
    for (auto& c : clients_) spawn(*c);
    ex_->run();
    return finish();
  }

 private:
  void build_objects() {
    const auto& w = cfg_.workload;
    if (!cfg_.trace) {
      objects_ = std::make_unique<ObjectTable>(w.object_count, w.object_size, cfg_.mns, layout_);
      last_completed_.assign(w.object_count, 0);
      return;
    }
    std::unordered_map<std::uint64_t, std::uint64_t> ids;
    std::vector<std::uint32_t> sizes;
    trace_ops_.resize(static_cast<std::size_t>(w.clients()));
    for (const auto& t : cfg_.trace->ops) {
      auto [it, fresh] = ids.try_emplace(t.key_hash, sizes.size());
      if (fresh) sizes.push_back(t.size);
      sizes[it->second] = std::max(sizes[it->second], t.size);
      trace_ops_[t.client_id % static_cast<std::uint32_t>(w.clients())].push_back(
          Op{t.write, it->second});
    }
    last_completed_.assign(sizes.size(), 0);
    objects_ = std::make_unique<ObjectTable>(std::move(sizes), cfg_.mns, layout_);
  }

  void build_engines() {
    const int cns = cfg_.workload.cns;
    core::CacheConfig cc = cfg_.cache;
    cc.workers = cfg_.workload.clients_per_cn;
    cc.skip_invalidation = cfg_.skip_invalidation;
    cc.record_hit_stamps = cfg_.record_hit_stamps;
    if (cfg_.coherence == Coherence::kDifacheNoac) cc.adaptive.enabled = false;
    if (cfg_.coherence == Coherence::kCmcache) cm_ = std::make_unique<baselines::CmManager>(*fab_, cfg_.cm);
    for (int c = 0; c < cns; ++c) {
      auto cn = static_cast<std::uint16_t>(c);
      std::unique_ptr<Engine> e;
      switch (cfg_.coherence) {
        case Coherence::kDifache:
        case Coherence::kDifacheNoac: {
          auto node = std::make_unique<core::CacheNode>(cn, *fab_, layout_, cc, coord_.get());
          caches_.push_back(node.get());
          e = std::move(node);
          break;
        }
        case Coherence::kCmcache:
          e = std::make_unique<baselines::CmCacheNode>(cn, *fab_, *cm_, coord_.get());
          break;
        case Coherence::kNocache:
          e = std::make_unique<baselines::NoCache>(cn, *fab_, coord_.get());
          break;
      }
      coord_->add_engine(cn, e.get());
      engines_.push_back(std::move(e));
    }
  }

  void build_clients() {
    const auto& w = cfg_.workload;
    for (int c = 0; c < w.cns; ++c) {
      for (int k = 0; k < w.clients_per_cn; ++k) {
        auto cl = std::make_unique<Client>();
        cl->gid = c * w.clients_per_cn + k;
        cl->cn = static_cast<std::uint16_t>(c);
        cl->worker.id = k;
        cl->worker.io.src = NodeId::cn(cl->cn);
        cl->worker.io.actor = cl->gid;
        if (cfg_.trace)
          cl->trace_ops = &trace_ops_[static_cast<std::size_t>(cl->gid)];
        else
          cl->stream = std::make_unique<SyntheticStream>(cfg_.workload, cl->gid);
        clients_.push_back(std::move(cl));
      }
    }
  }

  void spawn(Client& c) {
    ex_->spawn("cn" + std::to_string(c.cn) + ".c" + std::to_string(c.worker.id),
               [this, &c] { client_loop(c); });
  }

  // ---------------------------------------------------------------------
  // Client behaviour

  void client_loop(Client& c) {
    Engine& eng = *engines_[c.cn];
    const NodeId self = NodeId::cn(c.cn);
    Op op;
    while (fab_->alive(self) && c.next(op)) {
      const RemoteAddr obj = objects_->addr(op.object);
      const std::uint32_t size = objects_->size(op.object);
      c.buf.resize(size);
      const Nanos t0 = ex_->now();
      try {
        if (op.write)
          do_write(c, eng, op.object, obj, size);
        else
          do_read(c, eng, op.object, obj, size, t0);
      } catch (const FabricError&) {
        ++failed_;
      }
      after_attempt();
    }
  }

  void do_read(Client& c, Engine& eng, std::uint64_t id, RemoteAddr obj, std::uint32_t size,
               Nanos t0) {
    const std::uint64_t start = ex_->next_stamp();
    std::uint32_t retries = 0;
    for (;;) {
      EventClass ev = eng.read(c.worker, obj, c.buf);
      if (auto v = decode_object(id, c.buf)) {
        const std::uint64_t end = ex_->next_stamp();
        if (cfg_.record_history) history_.add({id, false, *v, start, end, c.gid});
        complete(ev, ex_->now() - t0, size);
        return;
      }
      ++read_retries_;
      if (++retries > cfg_.max_read_retries) throw LivenessError("read never saw a consistent image");
    }
  }

  // Write latency is the engine call alone; the application lock around it is
  // workload serialization, not coherence cost.
  void do_write(Client& c, Engine& eng, std::uint64_t id, RemoteAddr obj, std::uint32_t size) {
    const RemoteAddr lock = objects_->lock(id);
    const std::uint64_t tag = (std::uint64_t{c.cn} + 1) << 20 | static_cast<std::uint64_t>(c.worker.id + 1);
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (fab_->cas(c.worker.io, lock, 0, tag, fabric::OpPurpose::kAppLock) == 0) break;
      if (attempt >= cfg_.lock_retry_cap) throw LivenessError("LockTimeout");
      ex_->delay(cfg_.lock_backoff);
    }
    held_[lock] = tag;
    std::size_t hidx = 0;
    bool recorded = false;
    try {
      c.img.resize(size);
      fab_->read(c.worker.io, obj, c.img, fabric::OpPurpose::kData);
      std::uint64_t head;
      std::memcpy(&head, c.img.data(), 8);
      const std::uint64_t version = head + 1;
      encode_object(id, version, c.img);
      const std::uint64_t start = ex_->next_stamp();
      if (cfg_.record_history) {
        hidx = history_.ops().size();
        history_.add({id, true, version, start, kNever, c.gid});
        recorded = true;
      }
      const Nanos w0 = ex_->now();
      EventClass ev = eng.write(c.worker, obj, c.img);
      const Nanos engine_time = ex_->now() - w0;
      const std::uint64_t end = ex_->next_stamp();
      if (recorded) history_.set_end(hidx, end);
      last_completed_[id] = std::max(last_completed_[id], version);
      unlock(c, lock, tag);
      complete(ev, engine_time, size);
    } catch (const FabricError&) {
      try {
        unlock(c, lock, tag);
      } catch (const FabricError&) {
      }
      throw;
    }
  }

  void unlock(Client& c, RemoteAddr lock, std::uint64_t tag) {
    if (auto it = held_.find(lock); it != held_.end() && it->second == tag) held_.erase(it);
    fab_->cas(c.worker.io, lock, tag, 0, fabric::OpPurpose::kAppLock);
  }

  void complete(EventClass ev, Nanos latency, std::uint32_t bytes) {
    ++completed_;
    if (completed_ <= cfg_.warmup_ops) {
      if (completed_ == cfg_.warmup_ops) snapshot_warmup();
      return;
    }
    metrics_.record(ev, latency, bytes, ex_->now() - warm_time_);
  }

  void snapshot_warmup() {
    warm_time_ = ex_->now();
    warm_invalidations_ = invalidations_now();
    warm_mn_bytes_ = mn_bytes_now();
  }

  std::uint64_t invalidations_now() const {
    std::uint64_t n = 0;
    for (auto* c : caches_) n += c->stats().invalidation_msgs;
    if (cm_) n += cm_->stats().invalidations;
    return n;
  }

  std::uint64_t mn_bytes_now() const {
    std::uint64_t n = 0;
    for (const auto& [id, s] : fab_->stats().nodes)
      if (id.kind == NodeKind::kMemory) n += s.bytes_in + s.bytes_out;
    return n;
  }

  // ---------------------------------------------------------------------
  // Fault script, driven by the attempted-op count.

  void after_attempt() {
    ++attempted_;
    const auto& f = cfg_.faults;
    if (f.kill_cn && !cn_killed_ && attempted_ >= f.kill_cn_at) {
      cn_killed_ = true;
      last_kill_ = attempted_;
      faults_.push_back({FaultKind::kKillCn, completed_, ex_->now()});
      fab_->inject_failure(NodeId::cn(*f.kill_cn));
      coord_->report_timeout(NodeId::manager(), NodeId::cn(*f.kill_cn));
    }
    if (f.kill_mn_at && !mn_killed_ && attempted_ >= *f.kill_mn_at) {
      mn_killed_ = true;
      last_kill_ = attempted_;
      faults_.push_back({FaultKind::kKillMn, completed_, ex_->now()});
      fab_->inject_failure(NodeId::mn(f.kill_mn));
      coord_->report_timeout(NodeId::manager(), NodeId::mn(f.kill_mn));
    }
    const bool all_killed = (!f.kill_cn || cn_killed_) && (!f.kill_mn_at || mn_killed_);
    if (f.recover_after && !recovered_ && all_killed && attempted_ >= last_kill_ + *f.recover_after) {
      recovered_ = true;
      if (mn_killed_) {
        faults_.push_back({FaultKind::kRecoverMn, completed_, ex_->now()});
        coord_->recover_mn(f.kill_mn);
      }
      if (cn_killed_) {
        faults_.push_back({FaultKind::kRecoverCn, completed_, ex_->now()});
        coord_->recover_cn(*f.kill_cn);
        for (auto& c : clients_)
          if (c->cn == *f.kill_cn) spawn(*c);
      }
    }
  }

  void on_node_event(NodeId n, coord::NodeEvent e) {
    if (n.kind == NodeKind::kCompute && e == coord::NodeEvent::kDead) {
      // Locks held by the dead CN's clients would never be released.
      for (auto it = held_.begin(); it != held_.end();) {
        if ((it->second >> 20) == std::uint64_t{n.id} + 1) {
          if (fab_->alive(it->first.node)) fab_->memory(it->first.node).store(it->first.offset, 0);
          it = held_.erase(it);
        } else {
          ++it;
        }
      }
    }
    if (n.kind == NodeKind::kMemory) {
      for (auto it = held_.begin(); it != held_.end();)
        it = it->first.node == n ? held_.erase(it) : std::next(it);
      if (e == coord::NodeEvent::kRecovered) restore_mn(n.id);
    }
  }

  // A recovered MN comes back empty; reload the newest completed images.
  void restore_mn(std::uint16_t mn) {
    auto& mem = fab_->memory(NodeId::mn(mn));
    std::vector<std::byte> img;
    for (std::uint64_t i = 0; i < objects_->count(); ++i) {
      if (objects_->mn(i) != mn || last_completed_[i] == 0) continue;
      img.resize(objects_->size(i));
      encode_object(i, last_completed_[i], img);
      mem.write(objects_->addr(i).offset, img);
    }
  }

  // ---------------------------------------------------------------------

  ExperimentResult finish() {
    ExperimentResult r;
    metrics_.sim_time = ex_->elapsed() - warm_time_;
    metrics_.failed_ops = failed_;
    metrics_.read_retries = read_retries_;
    metrics_.invalidations = invalidations_now() - warm_invalidations_;
    metrics_.mn_bytes = mn_bytes_now() - warm_mn_bytes_;
    r.csv = metrics_.csv(cfg_.timeline_bin > 0);
    r.metrics = std::move(metrics_);
    if (cfg_.record_history) {
      r.validation = history_.validate();
      r.history = history_.ops();
    }
    r.fabric = fab_->stats();
    for (auto* c : caches_) {
      r.cache_stats.push_back(c->stats());
      r.hit_stamps += c->hit_stamps().size();
      for (auto s : c->hit_stamps())
        if (coord_->inside_fence(s)) ++r.hits_in_fences;
    }
    if (cm_) r.cm_stats = cm_->stats();
    r.fences = coord_->fences();
    r.faults = faults_;
    r.tracking_changes = coord_->tracking_changes();
    if (!caches_.empty()) r.modes = population_modes();
    return r;
  }

  std::vector<PopulationModes> population_modes() const {
    const auto& w = cfg_.workload;
    std::vector<PopulationModes> out(std::max<std::size_t>(1, w.populations.size()));
    const std::uint64_t n = std::min<std::uint64_t>(objects_->count(), 1u << 20);
    for (std::uint64_t i = 0; i < n; ++i) {
      std::uint64_t present = 0, on = 0;
      for (auto* c : caches_) {
        if (!fab_->alive(c->node())) continue;
        auto h = c->header(objects_->addr(i));
        if (!h || core::hdr::tag(h->state) != core::hdr::tag_of(pack_key(objects_->addr(i))))
          continue;
        ++present;
        if (h->mode_on()) ++on;
      }
      if (!present) continue;
      auto& p = out[cfg_.trace ? 0 : population_of(w, i)];
      ++p.objects;
      if (2 * on > present) ++p.on;
    }
    return out;
  }

  ExperimentConfig cfg_;
  MnLayout layout_;
  std::unique_ptr<sim::Executor> ex_;
  std::unique_ptr<fabric::Fabric> fab_;
  std::unique_ptr<coord::Coordinator> coord_;
  std::unique_ptr<baselines::CmManager> cm_;
  std::vector<std::unique_ptr<Engine>> engines_;
  std::vector<core::CacheNode*> caches_;
  std::unique_ptr<ObjectTable> objects_;
  std::vector<std::vector<Op>> trace_ops_;
  std::vector<std::unique_ptr<Client>> clients_;
  std::vector<std::uint64_t> last_completed_;
  std::map<RemoteAddr, std::uint64_t> held_;

  Metrics metrics_;
  History history_;
  std::uint64_t completed_ = 0, attempted_ = 0, failed_ = 0, read_retries_ = 0;
  Nanos warm_time_ = 0;
  std::uint64_t warm_invalidations_ = 0, warm_mn_bytes_ = 0;
  bool cn_killed_ = false, mn_killed_ = false, recovered_ = false;
  std::uint64_t last_kill_ = 0;
  std::vector<FaultEvent> faults_;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  Run run(cfg);
  return run.execute();
}

}  // namespace difache::bench
