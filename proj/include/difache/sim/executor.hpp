#pragma once

#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "difache/common.hpp"

namespace difache::sim {

// Counting semaphore whose waiters are simulation tasks.
class Semaphore {
 public:
  virtual ~Semaphore() = default;
  virtual void acquire() = 0;
  virtual void release() = 0;
};

// Runs simulated actors (clients, managers, fault scripts). Code between two
// calls to delay() executes atomically with respect to every other task in
// both executors; delay() is the only interleaving point.
class Executor {
 public:
  virtual ~Executor() = default;

  virtual Nanos now() const = 0;
  virtual void delay(Nanos d) = 0;
  void yield() { delay(0); }

  // Globally ordered event counter; used for history intervals.
  virtual std::uint64_t next_stamp() = 0;

  virtual void spawn(std::string name, std::function<void()> fn) = 0;
  virtual void run() = 0;

  virtual bool deterministic() const = 0;
  virtual bool in_task() const = 0;
  // Largest simulated time any task has reached.
  virtual Nanos elapsed() const = 0;

  virtual std::unique_ptr<Semaphore> make_semaphore(int permits) = 0;
};

enum class ScheduleMode {
  kTimed,        // earliest wake time first, FIFO on ties
  kRandomOrder,  // any runnable task, chosen by a seeded RNG
  kChoices,      // replay a choice vector (used by InterleavingExplorer)
};

struct SimOptions {
  ScheduleMode mode = ScheduleMode::kTimed;
  std::uint64_t seed = 1;
  std::vector<std::uint32_t> choices;
  std::uint64_t step_limit = 0;  // 0 = unlimited
  std::size_t stack_size = 256 * 1024;
};

class SimExecutor final : public Executor {
 public:
  explicit SimExecutor(SimOptions opts = {});
  ~SimExecutor() override;

  Nanos now() const override { return clock_; }
  void delay(Nanos d) override;
  std::uint64_t next_stamp() override { return ++stamp_; }
  void spawn(std::string name, std::function<void()> fn) override;
  void run() override;
  bool deterministic() const override { return true; }
  bool in_task() const override { return current_ >= 0; }
  Nanos elapsed() const override { return clock_; }
  std::unique_ptr<Semaphore> make_semaphore(int permits) override;

  // Called on the scheduler stack after every task step.
  void set_on_step(std::function<void()> fn) { on_step_ = std::move(fn); }

  struct Decision {
    std::uint32_t chosen;
    std::uint32_t options;
  };
  const std::vector<Decision>& decisions() const { return decisions_; }
  std::uint64_t steps() const { return steps_; }
  int current_task() const { return current_; }
  const std::string& task_name(int t) const;

 private:
  struct Task;
  class SimSemaphore;
  friend class SimSemaphore;

  void make_ready(int t, Nanos wake);
  void park_current();
  void switch_out();
  int pick();

  SimOptions opts_;
  std::vector<std::unique_ptr<Task>> tasks_;
  std::set<std::tuple<Nanos, std::uint64_t, int>> ready_;
  std::uint64_t seq_ = 0;
  std::uint64_t stamp_ = 0;
  std::uint64_t steps_ = 0;
  Nanos clock_ = 0;
  int current_ = -1;
  std::mt19937_64 rng_;
  std::vector<Decision> decisions_;
  std::function<void()> on_step_;
};

// Free-running mode: one OS thread per task, interleaved by the OS at every
// delay(). Each task keeps its own clock.
class ThreadExecutor final : public Executor {
 public:
  ThreadExecutor();
  ~ThreadExecutor() override;

  Nanos now() const override;
  void delay(Nanos d) override;
  std::uint64_t next_stamp() override { return ++stamp_; }
  void spawn(std::string name, std::function<void()> fn) override;
  void run() override;
  bool deterministic() const override { return false; }
  bool in_task() const override;
  Nanos elapsed() const override;
  std::unique_ptr<Semaphore> make_semaphore(int permits) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint64_t stamp_ = 0;
};

// Depth-first enumeration of every schedule of a small closed system. `body`
// must build a fresh world on the executor it is given and may throw to
// report a violation (the exception propagates out of explore()).
class InterleavingExplorer {
 public:
  struct Result {
    std::uint64_t runs = 0;
    bool exhausted = false;
  };
  static Result explore(const std::function<void(SimExecutor&)>& body,
                        std::uint64_t max_runs, std::uint64_t step_limit = 100000);
};

}  // namespace difache::sim
