#pragma once

// Host-mode transmitter: n - 2 worker threads toggle between a cache-resident
// matrix-multiply loop and sleep, following a waveform schedule.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <mutex>
#include <system_error>
#include <thread>
#include <vector>

#include "loadwave/codec.hpp"
#include "loadwave/error.hpp"

namespace loadwave::loadgen {

using Clock = std::chrono::steady_clock;

struct LoadPlan {
  int worker_count = 1;
  WaveformSchedule schedule;
  int matrix_dim = 64;
  double toggle_resolution_s = 0.01;

  void validate() const {
    if (worker_count < 1) fail(ErrorCode::invalid_argument, "worker_count must be >= 1");
    if (matrix_dim < 1) fail(ErrorCode::invalid_argument, "matrix_dim must be >= 1");
    if (!(toggle_resolution_s > 0.0)) fail(ErrorCode::invalid_argument, "toggle resolution must be positive");
    for (const auto& s : schedule.segments()) {
      if (toggle_resolution_s > s.duration_s / 4.0 + 1e-12) {
        fail(ErrorCode::invalid_argument, "toggle resolution exceeds a quarter of the shortest segment");
      }
    }
  }
};

/// Leaves two cores free of busy workers, with a floor of one worker.
inline LoadPlan plan_from_schedule(WaveformSchedule schedule, int n_cores) {
  if (n_cores < 1) fail(ErrorCode::invalid_argument, "n_cores must be >= 1");
  LoadPlan plan;
  plan.worker_count = std::max(1, n_cores - 2);
  plan.schedule = std::move(schedule);
  if (!plan.schedule.empty()) {
    double shortest = plan.schedule.segments().front().duration_s;
    for (const auto& s : plan.schedule.segments()) shortest = std::min(shortest, s.duration_s);
    plan.toggle_resolution_s = std::min(plan.toggle_resolution_s, shortest / 4.0);
  }
  return plan;
}

struct RunReport {
  std::size_t segments_executed = 0;
  std::vector<double> boundary_errors_s;  // actual - scheduled, per phase change
  bool aborted = false;

  double max_abs_error_s() const {
    double m = 0.0;
    for (double e : boundary_errors_s) m = std::max(m, std::abs(e));
    return m;
  }

  double percentile_abs_error_s(double q) const {
    if (boundary_errors_s.empty()) return 0.0;
    std::vector<double> v;
    for (double e : boundary_errors_s) v.push_back(std::abs(e));
    std::sort(v.begin(), v.end());
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size()))) - 1;
    return v[std::min(idx, v.size() - 1)];
  }
};

namespace detail {

/// One work unit: C = A * B on small dense matrices.
class MatrixKernel {
 public:
  explicit MatrixKernel(int dim)
      : dim_(static_cast<std::size_t>(dim)), a_(dim_ * dim_), b_(dim_ * dim_), c_(dim_ * dim_) {
    for (std::size_t i = 0; i < a_.size(); ++i) {
      a_[i] = 1.0 + static_cast<double>(i % 7) * 1e-3;
      b_[i] = 1.0 - static_cast<double>(i % 5) * 1e-3;
    }
  }

  double run() {
    for (std::size_t i = 0; i < dim_; ++i) {
      for (std::size_t j = 0; j < dim_; ++j) c_[i * dim_ + j] = 0.0;
      for (std::size_t k = 0; k < dim_; ++k) {
        const double aik = a_[i * dim_ + k];
        for (std::size_t j = 0; j < dim_; ++j) c_[i * dim_ + j] += aik * b_[k * dim_ + j];
      }
    }
    std::swap(a_, c_);
    // keep magnitudes bounded
    const double scale = 1.0 / (static_cast<double>(dim_) * a_[0]);
    for (auto& v : a_) v *= scale;
    return a_[dim_ + 1];
  }

 private:
  std::size_t dim_;
  std::vector<double> a_, b_, c_;
};

enum class Phase : int { idle = 0, busy = 1, stop = 2 };

}  // namespace detail

/// Handle for one transmission. start() launches the coordinator and
/// workers, wait() joins and returns the report, abort() stops early.
/// Not reentrant: a handle runs once.
class LoadRun {
 public:
  explicit LoadRun(LoadPlan plan) : plan_(std::move(plan)) { plan_.validate(); }

  LoadRun(const LoadRun&) = delete;
  LoadRun& operator=(const LoadRun&) = delete;

  ~LoadRun() {
    abort();
    join_all();
  }

  void start(Clock::time_point start_at) {
    if (started_) fail(ErrorCode::scheduling_error, "load run already started");
    if (start_at < Clock::now()) fail(ErrorCode::scheduling_error, "start instant is already past");
    started_ = true;
    if (plan_.schedule.empty()) return;
    try {
      for (int w = 0; w < plan_.worker_count; ++w) workers_.emplace_back([this] { worker_loop(); });
      coordinator_ = std::thread([this, start_at] { coordinate(start_at); });
    } catch (const std::system_error& e) {
      phase_.store(detail::Phase::stop);
      join_all();
      fail(ErrorCode::resource_error, std::string("cannot create worker threads: ") + e.what());
    }
  }

  RunReport wait() {
    join_all();
    std::lock_guard lock(mutex_);
    return report_;
  }

  /// Idempotent; a no-op after completion.
  void abort() noexcept {
    aborted_.store(true);
    phase_.store(detail::Phase::stop);
  }

  int active_workers() const noexcept { return busy_workers_.load(); }
  int peak_active_workers() const noexcept { return peak_busy_.load(); }

 private:
  void coordinate(Clock::time_point start_at) {
    // Merge consecutive segments that map to the same binary phase.
    struct Step {
      double offset_s;
      detail::Phase phase;
    };
    std::vector<Step> steps;
    for (std::size_t i = 0; i < plan_.schedule.size(); ++i) {
      const auto phase = plan_.schedule.segments()[i].target_load >= 0.5 ? detail::Phase::busy : detail::Phase::idle;
      if (steps.empty() || steps.back().phase != phase) steps.push_back({plan_.schedule.segment_start(i), phase});
    }
    const double total = plan_.schedule.total_duration_s();
    auto at = [&](double offset) {
      return start_at + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(offset));
    };
    auto sleep_until_or_abort = [&](Clock::time_point tp) {
      const auto slice = std::chrono::duration_cast<Clock::duration>(
          std::chrono::duration<double>(plan_.toggle_resolution_s));
      while (!aborted_.load()) {
        const auto now = Clock::now();
        if (now >= tp) return true;
        std::this_thread::sleep_until(std::min(tp, now + slice));
      }
      return false;
    };

    std::size_t executed = 0;
    for (const auto& step : steps) {
      if (!sleep_until_or_abort(at(step.offset_s))) break;
      phase_.store(step.phase);
      const double err = std::chrono::duration<double>(Clock::now() - at(step.offset_s)).count();
      std::lock_guard lock(mutex_);
      report_.boundary_errors_s.push_back(err);
    }
    if (sleep_until_or_abort(at(total))) {
      const double err = std::chrono::duration<double>(Clock::now() - at(total)).count();
      std::lock_guard lock(mutex_);
      report_.boundary_errors_s.push_back(err);
      executed = plan_.schedule.size();
    } else {
      // count segments whose end passed before the abort
      const double elapsed = std::chrono::duration<double>(Clock::now() - start_at).count();
      for (std::size_t i = 0; i < plan_.schedule.size(); ++i) {
        if (plan_.schedule.segment_start(i) + plan_.schedule.segments()[i].duration_s <= elapsed) ++executed;
      }
    }
    phase_.store(detail::Phase::stop);
    std::lock_guard lock(mutex_);
    report_.segments_executed = executed;
    report_.aborted = aborted_.load();
  }

  void worker_loop() {
    detail::MatrixKernel kernel(plan_.matrix_dim);
    volatile double sink = 0.0;
    const auto idle_slice = std::chrono::duration<double>(plan_.toggle_resolution_s);
    while (true) {
      const auto phase = phase_.load();
      if (phase == detail::Phase::stop) break;
      if (phase == detail::Phase::idle) {
        std::this_thread::sleep_for(idle_slice);
        continue;
      }
      const int now_busy = busy_workers_.fetch_add(1) + 1;
      int peak = peak_busy_.load();
      while (now_busy > peak && !peak_busy_.compare_exchange_weak(peak, now_busy)) {
      }
      while (phase_.load() == detail::Phase::busy) sink = sink + kernel.run();
      busy_workers_.fetch_sub(1);
    }
  }

  void join_all() {
    if (coordinator_.joinable()) coordinator_.join();
    for (auto& w : workers_) {
      if (w.joinable()) w.join();
    }
    workers_.clear();
  }

  LoadPlan plan_;
  std::atomic<detail::Phase> phase_{detail::Phase::idle};
  std::atomic<bool> aborted_{false};
  std::atomic<int> busy_workers_{0};
  std::atomic<int> peak_busy_{0};
  bool started_ = false;
  std::thread coordinator_;
  std::vector<std::thread> workers_;
  std::mutex mutex_;
  RunReport report_;
};

/// Blocking convenience: start at `start_at` and wait for completion.
inline RunReport execute(const LoadPlan& plan, Clock::time_point start_at) {
  LoadRun run(plan);
  run.start(start_at);
  return run.wait();
}

}  // namespace loadwave::loadgen
