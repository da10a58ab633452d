#include "mrdl/mrengine.hpp"

#include <algorithm>
#include <numeric>

namespace mrdl::mr {

std::vector<Partition> partition(std::size_t count, std::size_t workers) {
  if (workers == 0) throw ConfigError("partition: workers must be >= 1");
  std::vector<Partition> parts(workers);
  const std::size_t base = count / workers;
  const std::size_t extra = count % workers;
  std::size_t at = 0;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t n = base + (w < extra ? 1 : 0);
    parts[w] = {at, at + n};
    at += n;
  }
  return parts;
}

WorkerPool::WorkerPool(std::size_t workers) {
  if (workers == 0) throw ConfigError("worker pool: workers must be >= 1");
  errors_.resize(workers);
  threads_.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) threads_.emplace_back([this, w] { loop(w); });
}

WorkerPool::~WorkerPool() {
  {
    std::lock_guard lock(mu_);
    stop_ = true;
  }
  start_cv_.notify_all();
  for (auto& t : threads_) t.join();
}

void WorkerPool::loop(std::size_t worker) {
  std::uint64_t seen = 0;
  for (;;) {
    const std::function<void(std::size_t)>* body = nullptr;
    {
      std::unique_lock lock(mu_);
      start_cv_.wait(lock, [&] { return stop_ || generation_ != seen; });
      if (stop_) return;
      seen = generation_;
      body = body_;
    }
    std::exception_ptr err;
    try {
      (*body)(worker);
    } catch (...) {
      err = std::current_exception();
    }
    {
      std::lock_guard lock(mu_);
      errors_[worker] = err;
      if (--pending_ == 0) done_cv_.notify_one();
    }
  }
}

void WorkerPool::run(const std::function<void(std::size_t)>& body) {
  std::fill(errors_.begin(), errors_.end(), nullptr);
  if (!threads_.empty()) {
    std::lock_guard lock(mu_);
    body_ = &body;
    pending_ = threads_.size();
    ++generation_;
  }
  start_cv_.notify_all();
  try {
    body(0);
  } catch (...) {
    errors_[0] = std::current_exception();
  }
  if (!threads_.empty()) {
    std::unique_lock lock(mu_);
    done_cv_.wait(lock, [&] { return pending_ == 0; });
    body_ = nullptr;
  }
  for (const auto& e : errors_) {
    if (e) std::rethrow_exception(e);
  }
}

void Engine::register_mapper(std::string id, MapperFn fn, std::vector<std::string> required_config) {
  register_mapper_factory(
      std::move(id),
      [fn = std::move(fn)](std::string_view broadcast, const Config& config) -> MapTaskFn {
        return [&fn, broadcast, &config](const Record& input) { return fn(input, broadcast, config); };
      },
      std::move(required_config));
}

void Engine::register_mapper_factory(std::string id, MapperFactory factory,
                                     std::vector<std::string> required_config) {
  if (id.empty()) throw ConfigError("mapper id must be non-empty");
  if (mappers_.contains(id)) throw ConfigError("mapper '" + id + "' is already registered");
  mappers_.emplace(std::move(id), MapperEntry{std::move(factory), std::move(required_config)});
}

void Engine::register_reducer(std::string id, ReducerFn fn) {
  if (id.empty()) throw ConfigError("reducer id must be non-empty");
  if (reducers_.contains(id)) throw ConfigError("reducer '" + id + "' is already registered");
  reducers_.emplace(std::move(id), std::move(fn));
}

JobResult Engine::run_job(const JobSpec& spec) const {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();

  auto m = mappers_.find(spec.mapper_id);
  if (m == mappers_.end()) throw ConfigError("unknown mapper '" + spec.mapper_id + "'");
  auto r = reducers_.find(spec.reducer_id);
  if (r == reducers_.end()) throw ConfigError("unknown reducer '" + spec.reducer_id + "'");
  if (spec.workers == 0) throw ConfigError("job workers must be >= 1");
  for (const auto& key : m->second.required_config) {
    if (!spec.config.contains(key)) {
      throw ConfigError("mapper '" + spec.mapper_id + "' requires config key '" + key + "'");
    }
  }
  const MapperFactory& factory = m->second.factory;
  const ReducerFn& reducer = r->second;

  JobResult result;
  result.metrics.map_tasks = spec.input.size();
  WorkerPool pool(spec.workers);
  detail::FailureLatch latch;

  // Map.
  auto t0 = clock::now();
  std::vector<std::vector<Record>> emitted(spec.input.size());
  const auto task_parts = partition(spec.input.size(), spec.workers);
  pool.run([&](std::size_t w) {
    if (task_parts[w].size() == 0) return;
    const std::string broadcast = spec.broadcast;
    MapTaskFn map_task;
    try {
      map_task = factory(broadcast, spec.config);
    } catch (const std::exception& e) {
      latch.record(task_parts[w].begin, std::string("configure: ") + e.what());
      return;
    }
    for (std::size_t t = task_parts[w].begin; t < task_parts[w].end; ++t) {
      if (latch.failed()) return;
      try {
        emitted[t] = map_task(spec.input[t]);
        for (const auto& rec : emitted[t]) {
          if (rec.key.empty()) throw IntegrityError("mapper emitted an empty key");
        }
      } catch (const std::exception& e) {
        latch.record(t, e.what());
      }
    }
  });
  if (latch.failed()) {
    auto f = latch.failure();
    throw JobError("mapper '" + spec.mapper_id + "' failed on record " + std::to_string(f.index) + ": " +
                       f.message,
                   f.index);
  }
  result.metrics.phases.map = detail::seconds_since(t0);

  // Shuffle: a stable sort over records laid out in (task, emission) order
  // keeps that order within each key.
  t0 = clock::now();
  std::vector<Record*> flat;
  for (auto& out : emitted)
    for (auto& rec : out) flat.push_back(&rec);
  result.metrics.intermediate_records = flat.size();
  std::stable_sort(flat.begin(), flat.end(), [](const Record* a, const Record* b) { return a->key < b->key; });

  std::vector<std::string> keys;
  std::vector<std::vector<std::string>> groups;
  for (Record* rec : flat) {
    if (keys.empty() || keys.back() != rec->key) {
      keys.push_back(rec->key);
      groups.emplace_back();
    }
    groups.back().push_back(std::move(rec->value));
  }
  result.metrics.phases.shuffle = detail::seconds_since(t0);

  // Reduce.
  t0 = clock::now();
  result.output.resize(keys.size());
  const auto key_parts = partition(keys.size(), spec.workers);
  pool.run([&](std::size_t w) {
    for (std::size_t k = key_parts[w].begin; k < key_parts[w].end; ++k) {
      if (latch.failed()) return;
      try {
        Record out = reducer(keys[k], groups[k], spec.config);
        if (out.key != keys[k]) {
          throw IntegrityError("reducer changed key '" + keys[k] + "' to '" + out.key + "'");
        }
        result.output[k] = std::move(out);
      } catch (const std::exception& e) {
        latch.record(k, e.what());
      }
    }
  });
  if (latch.failed()) {
    auto f = latch.failure();
    throw JobError("reducer '" + spec.reducer_id + "' failed on key '" + keys[f.index] + "': " + f.message,
                   f.index);
  }
  result.metrics.phases.reduce = detail::seconds_since(t0);
  result.metrics.reduce_keys = keys.size();
  result.metrics.wall_time = detail::seconds_since(t_start);
  return result;
}

}  // namespace mrdl::mr
