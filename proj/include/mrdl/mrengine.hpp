#pragma once

// In-process map/shuffle/reduce engine.
//
// Two entry points share one execution model:
//   * Engine::run_job  - byte-string records and mappers/reducers looked up by
//                        id, the general contract.
//   * run_dense_job    - numeric jobs whose intermediate key space is the
//                        ordinals 0..key_count-1 and where every map task
//                        emits exactly one value per key, in key order. The
//                        shuffle then needs no key comparison, which is what
//                        makes per-parameter keys affordable for real nets.
//
// In both, reducer inputs arrive ordered by originating map-task index, then
// emission order, so results do not depend on the worker count.

#include <algorithm>
#include <chrono>
#include <concepts>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "mrdl/error.hpp"

namespace mrdl::mr {

struct Record {
  std::string key;
  std::string value;

  friend bool operator==(const Record&, const Record&) = default;
};

using Config = std::map<std::string, std::string, std::less<>>;

using MapperFn =
    std::function<std::vector<Record>(const Record& input, std::string_view broadcast, const Config&)>;
/// Per-task map function produced by a MapperFactory.
using MapTaskFn = std::function<std::vector<Record>(const Record& input)>;
/// Called once per worker and job with that worker's copy of the broadcast
/// payload (the configure step); the returned function then maps records.
/// The returned function may keep references to both arguments.
using MapperFactory = std::function<MapTaskFn(std::string_view broadcast, const Config&)>;
using ReducerFn =
    std::function<Record(const std::string& key, std::span<const std::string> values, const Config&)>;

struct JobSpec {
  std::vector<Record> input;
  std::string broadcast;
  std::string mapper_id;
  std::string reducer_id;
  std::size_t workers = 1;
  Config config;
};

struct PhaseTimes {
  double map = 0.0;
  double shuffle = 0.0;
  double reduce = 0.0;
};

struct JobMetrics {
  std::size_t map_tasks = 0;
  std::size_t reduce_keys = 0;
  std::size_t intermediate_records = 0;
  double wall_time = 0.0;  // seconds
  PhaseTimes phases;       // seconds
};

struct JobResult {
  std::vector<Record> output;  // sorted by key, keys unique
  JobMetrics metrics;
};

/// Half-open index range [begin, end).
struct Partition {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const Partition&, const Partition&) = default;
};

/// Contiguous balanced split of `count` items into `workers` ranges. Sizes
/// differ by at most one, larger ranges first. Throws ConfigError if
/// workers == 0.
std::vector<Partition> partition(std::size_t count, std::size_t workers);

template <typename T>
std::vector<std::span<const T>> partition(std::span<const T> input, std::size_t workers) {
  std::vector<std::span<const T>> out;
  for (const auto& p : partition(input.size(), workers)) out.push_back(input.subspan(p.begin, p.size()));
  return out;
}

/// Fixed set of threads that run one body per worker and wait for all of
/// them. Worker 0 is the calling thread.
class WorkerPool {
 public:
  explicit WorkerPool(std::size_t workers);
  ~WorkerPool();
  WorkerPool(const WorkerPool&) = delete;
  WorkerPool& operator=(const WorkerPool&) = delete;

  std::size_t size() const noexcept { return threads_.size() + 1; }

  /// Runs body(w) for every worker w and blocks until all return. If bodies
  /// throw, the exception of the lowest-numbered worker is rethrown.
  void run(const std::function<void(std::size_t)>& body);

 private:
  void loop(std::size_t worker);

  std::vector<std::thread> threads_;
  std::mutex mu_;
  std::condition_variable start_cv_;
  std::condition_variable done_cv_;
  const std::function<void(std::size_t)>* body_ = nullptr;
  std::vector<std::exception_ptr> errors_;
  std::uint64_t generation_ = 0;
  std::size_t pending_ = 0;
  bool stop_ = false;
};

class Engine {
 public:
  /// `required_config` lists config keys every job naming this mapper must carry.
  void register_mapper(std::string id, MapperFn fn, std::vector<std::string> required_config = {});
  void register_mapper_factory(std::string id, MapperFactory factory,
                               std::vector<std::string> required_config = {});
  void register_reducer(std::string id, ReducerFn fn);

  bool has_mapper(std::string_view id) const { return mappers_.find(id) != mappers_.end(); }
  bool has_reducer(std::string_view id) const { return reducers_.find(id) != reducers_.end(); }

  /// Blocking; safe to call concurrently once registration is finished.
  JobResult run_job(const JobSpec& spec) const;

 private:
  struct MapperEntry {
    MapperFactory factory;
    std::vector<std::string> required_config;
  };
  std::map<std::string, MapperEntry, std::less<>> mappers_;
  std::map<std::string, ReducerFn, std::less<>> reducers_;
};

// ---------------------------------------------------------------------------
// Dense numeric jobs

/// Reducer expressed as a left fold: acc = init(); acc = step(acc, v) for
/// each value in canonical order.
template <typename R>
concept FoldReducer = requires(const R& r, double acc, double v) {
  { r.init() } -> std::convertible_to<double>;
  { r.step(acc, v) } -> std::convertible_to<double>;
};

struct SumReducer {
  double init() const noexcept { return 0.0; }
  double step(double acc, double v) const noexcept { return acc + v; }
};

struct DenseJob {
  std::size_t key_count = 0;
  std::size_t workers = 1;
  /// Map tasks whose emissions are buffered before being folded into the
  /// reducer accumulators. 0 picks a default. Does not affect results.
  std::size_t wave = 0;
};

struct DenseJobResult {
  std::vector<double> output;  // output[k] is the reduced value of key k
  JobMetrics metrics;
};

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct TaskFailure {
  std::size_t index;
  std::string message;
};

/// Collects the failure with the lowest task index across workers.
class FailureLatch {
 public:
  void record(std::size_t index, std::string message) {
    std::lock_guard lock(mu_);
    if (!failed_ || index < failure_.index) failure_ = {index, std::move(message)};
    failed_ = true;
  }
  bool failed() const {
    std::lock_guard lock(mu_);
    return failed_;
  }
  TaskFailure failure() const {
    std::lock_guard lock(mu_);
    return failure_;
  }

 private:
  mutable std::mutex mu_;
  bool failed_ = false;
  TaskFailure failure_{};
};

}  // namespace detail

/// Runs a dense job. `mapper(broadcast, input[t], t, emit)` must fill all
/// job.key_count slots of `emit`. Each worker maps against its own copy of
/// `broadcast`. A throwing mapper aborts the job with JobError naming t.
template <typename Input, typename Broadcast, typename Mapper, FoldReducer Reducer>
DenseJobResult run_dense_job(const DenseJob& job, std::span<const Input> input, const Broadcast& broadcast,
                             Mapper&& mapper, const Reducer& reducer) {
  using clock = std::chrono::steady_clock;
  if (job.workers == 0) throw ConfigError("dense job: workers must be >= 1");
  const auto t_start = clock::now();

  DenseJobResult result;
  result.metrics.map_tasks = input.size();
  if (input.empty() || job.key_count == 0) {
    result.metrics.wall_time = detail::seconds_since(t_start);
    return result;
  }

  const std::size_t keys = job.key_count;
  const std::size_t wave = job.wave != 0 ? job.wave : std::max<std::size_t>(8, 2 * job.workers);
  WorkerPool pool(job.workers);
  std::vector<Broadcast> local(job.workers, broadcast);
  std::vector<double> buffer(std::min(wave, input.size()) * keys);
  std::vector<double> acc(keys, reducer.init());
  const auto key_parts = partition(keys, job.workers);
  detail::FailureLatch latch;

  for (std::size_t first = 0; first < input.size(); first += wave) {
    const std::size_t count = std::min(wave, input.size() - first);
    const auto task_parts = partition(count, job.workers);

    auto t0 = clock::now();
    pool.run([&](std::size_t w) {
      for (std::size_t t = task_parts[w].begin; t < task_parts[w].end; ++t) {
        if (latch.failed()) return;
        try {
          mapper(std::as_const(local[w]), input[first + t], first + t,
                 std::span<double>(buffer.data() + t * keys, keys));
        } catch (const std::exception& e) {
          latch.record(first + t, e.what());
        }
      }
    });
    if (latch.failed()) {
      auto f = latch.failure();
      throw JobError("map task " + std::to_string(f.index) + " failed: " + f.message, f.index);
    }
    result.metrics.phases.map += detail::seconds_since(t0);

    t0 = clock::now();
    pool.run([&](std::size_t w) {
      for (std::size_t k = key_parts[w].begin; k < key_parts[w].end; ++k) {
        double a = acc[k];
        for (std::size_t t = 0; t < count; ++t) a = reducer.step(a, buffer[t * keys + k]);
        acc[k] = a;
      }
    });
    result.metrics.phases.reduce += detail::seconds_since(t0);
  }

  result.output = std::move(acc);
  result.metrics.reduce_keys = keys;
  result.metrics.intermediate_records = keys * input.size();
  result.metrics.wall_time = detail::seconds_since(t_start);
  return result;
}

}  // namespace mrdl::mr
