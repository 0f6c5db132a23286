#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include "difache/bench/experiment.hpp"

using namespace difache;

namespace {

// "<id>@<op#>" or "@<op#>".
bool parse_kill(const std::string& s, std::string& id, std::uint64_t& at) {
  auto p = s.find('@');
  if (p == std::string::npos) return false;
  id = s.substr(0, p);
  try {
    at = std::stoull(s.substr(p + 1));
  } catch (...) {
    return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cache-coherence benchmark over a simulated disaggregated-memory fabric"};
  app.require_subcommand(1);

  bench::ExperimentConfig cfg;
  auto& w = cfg.workload;
  w.total_ops = 200000;
  w.object_count = 100000;
  std::string coherence = "difache", tracking = "auto", out, trace_file, kill_cn, kill_mn;
  std::uint64_t recover = 0;
  bool torn = false;
  std::uint64_t index_buckets = cfg.cache.index.num_buckets;
  std::uint64_t buffer_mb = cfg.cache.buffer_bytes >> 20;
  std::string populations;

  auto common = [&](CLI::App* sc) {
    sc->add_option("--cns", w.cns, "compute nodes")->check(CLI::Range(1, 1024));
    sc->add_option("--clients-per-cn", w.clients_per_cn, "clients per CN")->check(CLI::Range(1, 256));
    sc->add_option("--read-ratio", w.read_ratio, "fraction of reads")->check(CLI::Range(0.0, 1.0));
    sc->add_option("--zipf", w.zipf_alpha, "zipf alpha (0 = uniform)");
    sc->add_option("--obj-size", w.object_size, "object bytes including version words");
    sc->add_option("--objects", w.object_count, "object count");
    sc->add_option("--ops", w.total_ops, "total operations");
    sc->add_option("--populations", populations,
                   "mixed populations as fraction:read_ratio,... (e.g. 0.5:1.0,0.5:0.5)");
    sc->add_option("--coherence", coherence, "difache|difache-noac|cmcache|nocache")
        ->check(CLI::IsMember({"difache", "difache-noac", "cmcache", "nocache"}));
    sc->add_option("--owner-tracking", tracking, "broadcast|ownerset|auto")
        ->check(CLI::IsMember({"broadcast", "ownerset", "auto"}));
    sc->add_option("--seed", w.seed, "random seed");
    sc->add_flag("--deterministic,!--threads", cfg.deterministic,
                 "run on the deterministic scheduler (default) or on OS threads");
    sc->add_option("--out", out, "CSV output path (default stdout)");
    sc->add_option("--mns", cfg.mns, "memory nodes")->check(CLI::Range(1, 64));
    sc->add_option("--warmup", cfg.warmup_ops, "completed ops excluded from metrics");
    sc->add_option("--timeline-bin", cfg.timeline_bin, "throughput timeline bin in ns (0 = off)");
    sc->add_flag("--torn", torn, "inject torn reads");
    sc->add_option("--index-buckets", index_buckets, "cache index buckets per CN");
    sc->add_option("--buffer-mb", buffer_mb, "cache buffer per CN in MiB");
    sc->add_option("--kill-cn", kill_cn, "<id>@<op#>: kill a CN after that many ops");
    sc->add_option("--kill-mn", kill_mn, "@<op#>: kill the MN after that many ops");
    sc->add_option("--recover", recover, "recover killed nodes this many ops after the last kill");
  };
  auto* synth = app.add_subcommand("synth", "synthetic zipf workload");
  auto* trace = app.add_subcommand("trace", "replay a cache trace");
  auto* faults = app.add_subcommand("faults", "fault timeline: kill a CN, then the MN, then recover");
  common(synth);
  common(trace);
  common(faults);
  trace->add_option("--trace-file", trace_file, "trace CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.coherence = bench::parse_coherence(coherence);
    cfg.coord.tracking = owner::parse_policy(tracking);
    cfg.fabric.torn_read_injection = torn;
    cfg.cache.index.num_buckets = index_buckets;
    cfg.cache.buffer_bytes = buffer_mb << 20;
    if (!populations.empty()) {
      std::size_t pos = 0;
      while (pos < populations.size()) {
        auto end = populations.find(',', pos);
        auto item = populations.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        auto colon = item.find(':');
        if (colon == std::string::npos) throw std::invalid_argument("bad population: " + item);
        w.populations.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
        pos = end == std::string::npos ? populations.size() : end + 1;
      }
    }
    std::string id;
    std::uint64_t at = 0;
    if (!kill_cn.empty()) {
      if (!parse_kill(kill_cn, id, at) || id.empty()) throw std::invalid_argument("--kill-cn wants <id>@<op#>");
      cfg.faults.kill_cn = static_cast<std::uint16_t>(std::stoul(id));
      cfg.faults.kill_cn_at = at;
    }
    if (!kill_mn.empty()) {
      if (!parse_kill(kill_mn, id, at)) throw std::invalid_argument("--kill-mn wants @<op#>");
      cfg.faults.kill_mn = id.empty() ? 0 : static_cast<std::uint16_t>(std::stoul(id));
      cfg.faults.kill_mn_at = at;
    }
    if (recover) cfg.faults.recover_after = recover;
    if (faults->parsed()) {
      if (!cfg.faults.any()) {
        cfg.faults.kill_cn = static_cast<std::uint16_t>(w.cns > 1 ? 1 : 0);
        cfg.faults.kill_cn_at = w.total_ops / 4;
        cfg.faults.kill_mn_at = w.total_ops / 2;
      }
      if (!cfg.faults.recover_after) cfg.faults.recover_after = std::max<std::uint64_t>(1, w.total_ops / 20);
      if (cfg.timeline_bin == 0) cfg.timeline_bin = 100000;
    }
    if (cfg.faults.kill_cn && *cfg.faults.kill_cn >= w.cns) throw std::invalid_argument("--kill-cn id out of range");
    if (cfg.faults.kill_mn_at && cfg.faults.kill_mn >= cfg.mns) throw std::invalid_argument("--kill-mn id out of range");

    bench::Trace tr;
    if (trace->parsed()) {
      tr = bench::parse_trace(trace_file);
      cfg.trace = &tr;
      w.total_ops = tr.ops.size();
      std::cerr << "trace: " << tr.ops.size() << " ops, " << tr.malformed << " malformed, "
                << tr.ignored << " ignored\n";
    }

    auto res = bench::run_experiment(cfg);
    if (out.empty()) {
      std::cout << res.csv;
    } else {
      std::ofstream f(out, std::ios::binary);
      if (!f) throw std::runtime_error("cannot write " + out);
      f << res.csv;
    }
    std::cerr << "validator: " << (res.validation.ok ? "pass" : "FAIL") << " (" << res.validation.reads
              << " reads, " << res.validation.writes << " writes";
    if (res.validation.first) std::cerr << "; first violation: " << res.validation.first->describe();
    std::cerr << ")\n";
    if (res.metrics.failed_ops) std::cerr << "failed ops: " << res.metrics.failed_ops << "\n";
    return res.validation.ok ? 0 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
