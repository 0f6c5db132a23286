#include "difache/sim/executor.hpp"

#include <algorithm>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include <boost/context/fiber.hpp>
#include <boost/context/fixedsize_stack.hpp>

namespace difache::sim {

namespace ctx = boost::context;

struct SimExecutor::Task {
  std::string name;
  std::function<void()> fn;
  ctx::fiber fiber;
  ctx::fiber sink;
  bool done = false;
  std::exception_ptr error;
};

class SimExecutor::SimSemaphore final : public Semaphore {
 public:
  SimSemaphore(SimExecutor& ex, int permits) : ex_(ex), permits_(permits) {}

  void acquire() override {
    if (permits_ > 0) {
      --permits_;
      return;
    }
    if (!ex_.in_task()) throw std::logic_error("semaphore acquire outside a task");
    waiters_.push_back(ex_.current_);
    ex_.park_current();  // permit is handed over by release()
  }

  void release() override {
    if (waiters_.empty()) {
      ++permits_;
      return;
    }
    int t = waiters_.front();
    waiters_.pop_front();
    ex_.make_ready(t, ex_.clock_);
  }

 private:
  SimExecutor& ex_;
  int permits_;
  std::deque<int> waiters_;
};

SimExecutor::SimExecutor(SimOptions opts) : opts_(std::move(opts)), rng_(opts_.seed) {}

SimExecutor::~SimExecutor() = default;

const std::string& SimExecutor::task_name(int t) const { return tasks_.at(t)->name; }

void SimExecutor::spawn(std::string name, std::function<void()> fn) {
  int idx = static_cast<int>(tasks_.size());
  auto task = std::make_unique<Task>();
  task->name = std::move(name);
  task->fn = std::move(fn);
  Task* tp = task.get();
  tp->fiber = ctx::fiber(std::allocator_arg, ctx::fixedsize_stack(opts_.stack_size),
                         [tp](ctx::fiber&& sink) {
                           tp->sink = std::move(sink);
                           try {
                             tp->fn();
                           } catch (const ctx::detail::forced_unwind&) {
                             throw;
                           } catch (...) {
                             tp->error = std::current_exception();
                           }
                           tp->done = true;
                           return std::move(tp->sink);
                         });
  tasks_.push_back(std::move(task));
  make_ready(idx, clock_);
}

void SimExecutor::make_ready(int t, Nanos wake) { ready_.emplace(wake, seq_++, t); }

void SimExecutor::switch_out() {
  Task& t = *tasks_[current_];
  t.sink = std::move(t.sink).resume();
}

void SimExecutor::park_current() { switch_out(); }

void SimExecutor::delay(Nanos d) {
  if (d < 0) d = 0;
  if (!in_task()) {
    clock_ += d;
    return;
  }
  make_ready(current_, clock_ + d);
  switch_out();
}

int SimExecutor::pick() {
  auto n = static_cast<std::uint32_t>(ready_.size());
  std::uint32_t i = 0;
  if (n > 1) {
    switch (opts_.mode) {
      case ScheduleMode::kTimed:
        i = 0;
        break;
      case ScheduleMode::kRandomOrder:
        i = static_cast<std::uint32_t>(rng_() % n);
        break;
      case ScheduleMode::kChoices: {
        std::size_t k = decisions_.size();
        i = k < opts_.choices.size() ? std::min(opts_.choices[k], n - 1) : 0;
        decisions_.push_back({i, n});
        break;
      }
    }
  }
  auto it = ready_.begin();
  std::advance(it, i);
  auto [wake, seq, t] = *it;
  ready_.erase(it);
  clock_ = std::max(clock_, wake);
  return t;
}

void SimExecutor::run() {
  while (!ready_.empty()) {
    int t = pick();
    current_ = t;
    Task& task = *tasks_[t];
    task.fiber = std::move(task.fiber).resume();
    current_ = -1;
    ++steps_;
    if (task.error) {
      auto e = task.error;
      task.error = nullptr;
      std::rethrow_exception(e);
    }
    if (on_step_) on_step_();
    if (opts_.step_limit && steps_ > opts_.step_limit)
      throw LivenessError("scheduler step limit exceeded");
  }
  for (auto& t : tasks_)
    if (!t->done) throw LivenessError("deadlock: task '" + t->name + "' is parked forever");
}

std::unique_ptr<Semaphore> SimExecutor::make_semaphore(int permits) {
  return std::make_unique<SimSemaphore>(*this, permits);
}

// ---------------------------------------------------------------------------

struct ThreadExecutor::Impl {
  struct Task {
    std::string name;
    std::function<void()> fn;
    Nanos clock = 0;
  };
  std::mutex gil;
  std::vector<std::unique_ptr<Task>> tasks;
  std::vector<std::thread> threads;
  std::exception_ptr error;
  Nanos base_clock = 0;
  bool running = false;

  static thread_local Task* current;

  void start(Task* t) {
    threads.emplace_back([this, t] {
      std::unique_lock lk(gil);
      current = t;
      try {
        t->fn();
      } catch (...) {
        if (!error) error = std::current_exception();
      }
      current = nullptr;
    });
  }
};

thread_local ThreadExecutor::Impl::Task* ThreadExecutor::Impl::current = nullptr;

namespace {

class ThreadSemaphore final : public Semaphore {
 public:
  ThreadSemaphore(std::mutex& gil, ThreadExecutor& ex, int permits)
      : gil_(gil), ex_(ex), permits_(permits) {}

  // Called with the executor lock held (all task code runs under it).
  void acquire() override {
    std::unique_lock lk(gil_, std::adopt_lock);
    cv_.wait(lk, [&] { return permits_ > 0; });
    --permits_;
    lk.release();
    Nanos gap = last_release_ - ex_.now();
    if (gap > 0) ex_.delay(gap);
  }
  void release() override {
    ++permits_;
    last_release_ = std::max(last_release_, ex_.now());
    cv_.notify_one();
  }

 private:
  std::mutex& gil_;
  ThreadExecutor& ex_;
  int permits_;
  Nanos last_release_ = 0;
  std::condition_variable_any cv_;
};

}  // namespace

ThreadExecutor::ThreadExecutor() : impl_(std::make_unique<Impl>()) {}

ThreadExecutor::~ThreadExecutor() {
  for (auto& th : impl_->threads)
    if (th.joinable()) th.join();
}

Nanos ThreadExecutor::now() const {
  return Impl::current ? Impl::current->clock : impl_->base_clock;
}

bool ThreadExecutor::in_task() const { return Impl::current != nullptr; }

void ThreadExecutor::delay(Nanos d) {
  if (d < 0) d = 0;
  if (!Impl::current) {
    impl_->base_clock += d;
    return;
  }
  Impl::current->clock += d;
  impl_->gil.unlock();
  std::this_thread::yield();
  impl_->gil.lock();
}

void ThreadExecutor::spawn(std::string name, std::function<void()> fn) {
  auto t = std::make_unique<Impl::Task>();
  t->name = std::move(name);
  t->fn = std::move(fn);
  t->clock = now();
  Impl::Task* tp = t.get();
  impl_->tasks.push_back(std::move(t));
  if (impl_->running) impl_->start(tp);
}

void ThreadExecutor::run() {
  {
    std::unique_lock lk(impl_->gil);
    impl_->running = true;
    for (auto& t : impl_->tasks) impl_->start(t.get());
  }
  // Threads spawned while running append to `threads`; join until stable.
  for (std::size_t i = 0;; ++i) {
    std::thread th;
    {
      std::unique_lock lk(impl_->gil);
      if (i >= impl_->threads.size()) {
        impl_->running = false;
        break;
      }
      th = std::move(impl_->threads[i]);
    }
    th.join();
  }
  impl_->threads.clear();
  for (auto& t : impl_->tasks) impl_->base_clock = std::max(impl_->base_clock, t->clock);
  impl_->tasks.clear();
  if (impl_->error) {
    auto e = impl_->error;
    impl_->error = nullptr;
    std::rethrow_exception(e);
  }
}

Nanos ThreadExecutor::elapsed() const {
  Nanos m = impl_->base_clock;
  for (auto& t : impl_->tasks) m = std::max(m, t->clock);
  return m;
}

std::unique_ptr<Semaphore> ThreadExecutor::make_semaphore(int permits) {
  return std::make_unique<ThreadSemaphore>(impl_->gil, *this, permits);
}

// ---------------------------------------------------------------------------

InterleavingExplorer::Result InterleavingExplorer::explore(
    const std::function<void(SimExecutor&)>& body, std::uint64_t max_runs,
    std::uint64_t step_limit) {
  Result res;
  std::vector<std::uint32_t> prefix;
  while (res.runs < max_runs) {
    SimOptions o;
    o.mode = ScheduleMode::kChoices;
    o.choices = prefix;
    o.step_limit = step_limit;
    o.stack_size = 64 * 1024;
    SimExecutor ex(o);
    body(ex);
    ++res.runs;
    // Backtrack: bump the deepest decision that still has an untried option.
    const auto& d = ex.decisions();
    std::size_t k = d.size();
    while (k > 0 && d[k - 1].chosen + 1 >= d[k - 1].options) --k;
    if (k == 0) {
      res.exhausted = true;
      break;
    }
    prefix.resize(k);
    for (std::size_t i = 0; i + 1 < k; ++i) prefix[i] = d[i].chosen;
    prefix[k - 1] = d[k - 1].chosen + 1;
  }
  return res;
}

}  // namespace difache::sim
