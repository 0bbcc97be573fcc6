#pragma once

#include <chrono>
#include <cstdio>
#include <memory>
#include <ostream>
#include <thread>
#include <unordered_map>
#include <vector>

#include "xlij/gradcheck.hpp"
#include "xlij/model.hpp"

namespace xlij {

// Mixture draw for one training sample; a pure function of the sample seed.
inline TaskKind pick_task(uint64_t sample_seed, const RunConfig& cfg) {
  const double total = cfg.weight_detail + cfg.weight_semantic + cfg.weight_comp;
  const double u = static_cast<double>(mix64(derive_seed(sample_seed, 0x7a5)) >> 11) *
                   (1.0 / 9007199254740992.0) * total;
  if (u < cfg.weight_detail) return TaskKind::detail;
  if (u < cfg.weight_detail + cfg.weight_semantic) return TaskKind::semantic;
  return TaskKind::compositional;
}

template <class T>
struct Sgd {
  double lr = 0.05;
  void step(ParamStore<T>& store) {
    for (auto& p : store) {
      if (!p.trainable) continue;
      for (size_t i = 0; i < p.value.size(); ++i)
        p.value.data[i] -= static_cast<T>(lr) * p.grad.data[i];
    }
  }
};

template <class T>
struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t t = 0;
  std::vector<Mat<T>> m, v;

  void step(ParamStore<T>& store) {
    if (m.empty()) {
      for (auto& p : store) {
        m.push_back(Mat<T>::zeros(p.value.rows, p.value.cols));
        v.push_back(Mat<T>::zeros(p.value.rows, p.value.cols));
      }
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    size_t idx = 0;
    for (auto& p : store) {
      Mat<T>& mi = m[idx];
      Mat<T>& vi = v[idx];
      ++idx;
      if (!p.trainable) continue;
      for (size_t i = 0; i < p.value.size(); ++i) {
        const double g = static_cast<double>(p.grad.data[i]);
        const double mn = beta1 * static_cast<double>(mi.data[i]) + (1.0 - beta1) * g;
        const double vn = beta2 * static_cast<double>(vi.data[i]) + (1.0 - beta2) * g * g;
        mi.data[i] = static_cast<T>(mn);
        vi.data[i] = static_cast<T>(vn);
        p.value.data[i] -=
            static_cast<T>(lr * (mn / bc1) / (std::sqrt(vn / bc2) + eps));
      }
    }
  }
};

struct EvalResult {
  double accuracy = 0.0;
  int correct = 0;
  int total = 0;
  GateTrace trace;
};

namespace detail_impl {

// Seed-range overlap guard between the training protocol and an eval range.
inline void check_leakage(const RunConfig& cfg, uint64_t eval_start, uint64_t eval_count) {
  const uint64_t train_a = cfg.train_seed_start, train_b = cfg.train_seed_end();
  const uint64_t eval_a = eval_start, eval_b = eval_start + eval_count;
  if (train_a < eval_b && eval_a < train_b)
    fail(errc::leakage, "eval seed range [" + std::to_string(eval_a) + ", " +
                            std::to_string(eval_b) + ") overlaps train range [" +
                            std::to_string(train_a) + ", " + std::to_string(train_b) + ")");
}

}  // namespace detail_impl

// Greedy exact-match accuracy over held-out seeds. Forward-only; safe to run
// across threads (contiguous shards, merged in shard order).
template <class T>
EvalResult evaluate(const CliModel<T>& model, TaskKind task, int n_samples, uint64_t seed_start,
                    bool record_trace = false, int threads = 1) {
  const RunConfig& cfg = model.config();
  detail_impl::check_leakage(cfg, seed_start, static_cast<uint64_t>(n_samples));

  const int n_threads = std::max(1, std::min(threads, n_samples == 0 ? 1 : n_samples));
  std::vector<int> correct(n_threads, 0);
  std::vector<GateTrace> traces(n_threads);
  auto worker = [&](int w) {
    const int lo = static_cast<int>(static_cast<int64_t>(n_samples) * w / n_threads);
    const int hi = static_cast<int>(static_cast<int64_t>(n_samples) * (w + 1) / n_threads);
    for (int i = lo; i < hi; ++i) {
      QuerySample s =
          generate_sample(seed_start + static_cast<uint64_t>(i), task, model.synth_spec(),
                          cfg.vocab_size);
      Tape<T> tape;
      TraceMeta meta;
      meta.batch_index = i;
      auto logits = model.forward(tape, s, record_trace ? &traces[w] : nullptr, meta);
      if (model.predict(tape, logits, s) == s.answer_class) ++correct[w];
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker, w);
    for (auto& th : pool) th.join();
  }

  EvalResult r;
  r.total = n_samples;
  for (int w = 0; w < n_threads; ++w) {
    r.correct += correct[w];
    r.trace.entries.insert(r.trace.entries.end(), traces[w].entries.begin(),
                           traces[w].entries.end());
  }
  r.accuracy = n_samples == 0 ? 0.0 : static_cast<double>(r.correct) / n_samples;
  return r;
}

struct TrainStats {
  int64_t steps_run = 0;
  double final_loss = 0.0;
  double acc_detail = 0.0, acc_semantic = 0.0, acc_comp = 0.0;
};

// Deterministic training loop. Batch items draw consecutive data seeds; with
// threads > 1 the batch is split into contiguous shards whose gradients
// accumulate into private buffers and merge in shard order, so results are a
// pure function of (seed, config).
//
// On a non-finite loss the parameters are rolled back to the last logged
// snapshot and a numeric error is raised; the caller still holds a usable
// model.
template <class T>
TrainStats train(CliModel<T>& model, std::ostream& metrics) {
  const RunConfig& cfg = model.config();
  ParamStore<T>& store = model.params();
  const int n_threads = std::max(1, std::min(cfg.threads, cfg.batch_size));

  Sgd<T> sgd;
  sgd.lr = cfg.lr;
  Adam<T> adam;
  adam.lr = cfg.lr;
  const bool use_adam = cfg.optimizer == "adam";

  // Last-good snapshot for divergence rollback.
  std::vector<Mat<T>> snapshot;
  int64_t snapshot_step = 0;
  auto take_snapshot = [&](int64_t step) {
    snapshot.clear();
    for (auto& p : store) snapshot.push_back(p.value);
    snapshot_step = step;
  };
  auto restore_snapshot = [&] {
    size_t i = 0;
    for (auto& p : store) p.value = snapshot[i++];
  };
  take_snapshot(0);

  // Worker-local gradient buffers + sink redirects.
  std::vector<std::vector<Mat<T>>> buffers(n_threads);
  std::vector<std::unordered_map<Mat<T>*, Mat<T>*>> redirects(n_threads);
  if (n_threads > 1) {
    for (int w = 0; w < n_threads; ++w) {
      buffers[w].reserve(store.count());
      for (auto& p : store) buffers[w].push_back(Mat<T>::zeros(p.value.rows, p.value.cols));
      size_t i = 0;
      for (auto& p : store) redirects[w][&p.grad] = &buffers[w][i++];
    }
  }

  TrainStats stats;
  double loss_window = 0.0;
  int loss_window_n = 0;
  char line[256];

  auto quick_accs = [&] {
    const int n = cfg.quick_eval_samples;
    if (n <= 0) return;
    stats.acc_detail =
        evaluate(model, TaskKind::detail, n, cfg.eval_seed_start, false, n_threads).accuracy;
    stats.acc_semantic =
        evaluate(model, TaskKind::semantic, n, cfg.eval_seed_start, false, n_threads).accuracy;
    stats.acc_comp = evaluate(model, TaskKind::compositional, n, cfg.eval_seed_start, false,
                              n_threads)
                         .accuracy;
  };

  for (int64_t step = 1; step <= cfg.steps; ++step) {
    store.zero_grad();
    std::vector<double> shard_loss(n_threads, 0.0);

    auto run_items = [&](int w, int lo, int hi, Tape<T>* /*unused*/) {
      for (int j = lo; j < hi; ++j) {
        const uint64_t seed =
            cfg.train_seed_start + (static_cast<uint64_t>(step - 1)) * cfg.batch_size + j;
        QuerySample s = generate_sample(seed, pick_task(seed, cfg), model.synth_spec(),
                                        cfg.vocab_size);
        Tape<T> tape;
        if (n_threads > 1) tape.redirect_sinks(&redirects[w]);
        auto loss = model.loss(tape, s);
        auto scaled = tape.scale(loss, T(1) / T(cfg.batch_size));
        tape.backward(scaled);
        shard_loss[w] += static_cast<double>(tape.val(loss).data[0]);
      }
    };

    if (n_threads == 1) {
      run_items(0, 0, cfg.batch_size, nullptr);
    } else {
      for (auto& b : buffers)
        for (auto& g : b) g.set_zero();
      std::vector<std::thread> pool;
      for (int w = 0; w < n_threads; ++w) {
        const int lo = static_cast<int>(static_cast<int64_t>(cfg.batch_size) * w / n_threads);
        const int hi =
            static_cast<int>(static_cast<int64_t>(cfg.batch_size) * (w + 1) / n_threads);
        pool.emplace_back(run_items, w, lo, hi, nullptr);
      }
      for (auto& th : pool) th.join();
      for (int w = 0; w < n_threads; ++w) {
        size_t i = 0;
        for (auto& p : store) add_acc(buffers[w][i++], p.grad);
      }
    }

    double batch_loss = 0.0;
    for (double l : shard_loss) batch_loss += l;
    batch_loss /= cfg.batch_size;

    if (!std::isfinite(batch_loss)) {
      restore_snapshot();
      fail(errc::numeric, "training diverged at step " + std::to_string(step) +
                              "; parameters rolled back to step " +
                              std::to_string(snapshot_step));
    }

    if (use_adam)
      adam.step(store);
    else
      sgd.step(store);

    loss_window += batch_loss;
    ++loss_window_n;
    stats.final_loss = batch_loss;
    stats.steps_run = step;

    const bool log_now = cfg.log_every > 0 && (step % cfg.log_every == 0 || step == cfg.steps);
    const bool eval_now = cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.steps);
    if (eval_now) quick_accs();
    if (log_now) {
      std::snprintf(line, sizeof(line),
                    "step=%lld loss=%.6f acc_detail=%.4f acc_semantic=%.4f acc_comp=%.4f",
                    static_cast<long long>(step), loss_window / loss_window_n, stats.acc_detail,
                    stats.acc_semantic, stats.acc_comp);
      metrics << line << "\n";
      metrics.flush();
      loss_window = 0.0;
      loss_window_n = 0;
      take_snapshot(step);
    }
  }
  return stats;
}

}  // namespace xlij
