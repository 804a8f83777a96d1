#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mcseg/harness/config.hpp"
#include "mcseg/harness/data.hpp"
#include "mcseg/inference/sliding_window.hpp"
#include "mcseg/metrics/metrics.hpp"
#include "mcseg/netarch/checkpoint.hpp"
#include "mcseg/netarch/network.hpp"
#include "mcseg/objectives/objectives.hpp"

namespace mcseg {

struct TrainLogRow {
  std::int64_t iter = 0;  // 1-based, the iteration just completed
  double l_seg = 0.0, l_c = 0.0, lambda = 0.0, lr = 0.0;
};

struct EvalRow {
  std::int64_t iter = 0;
  std::string output;  // decoderA | decoderB | ensemble
  MetricReport metrics;
};

struct ExperimentLog {
  std::vector<TrainLogRow> train;
  std::vector<EvalRow> evals;
};

struct ExperimentResult {
  ExperimentLog log;
  double best_ensemble_dice = 0.0;
  std::int64_t best_iteration = 0;
  MetricReport final_ensemble, final_decoder_a, final_decoder_b;
  std::string param_checksum;
};

namespace detail {

inline std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

}  // namespace detail

// FNV-1a over the float32 parameter bytes in canonical visit order.
inline std::string parameter_checksum(DualDecoderNet<float>& net) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  net.visit_params([&](const std::string&, std::vector<float>& w, std::vector<float>&) {
    for (float f : w) {
      const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
      for (int b = 0; b < 4; ++b) {
        h ^= (bits >> (8 * b)) & 0xff;
        h *= 0x100000001b3ull;
      }
    }
  });
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// Per-eval fallback when a prediction has no surface: report the volume
// diagonal (the worst attainable distance) rather than a silent zero, so log
// rows stay finite and comparable.
inline MetricReport evaluate_with_worst_case(const LabelMask& pred, const LabelMask& gt,
                                             Spacing3 spacing = {}) {
  MetricReport r;
  std::tie(r.dice, r.jaccard) = overlap_metrics(pred, gt);
  try {
    std::tie(r.hd95, r.asd) = surface_distances(pred, gt, spacing);
  } catch (const UndefinedMetricError&) {
    const double dx = spacing.x * (pred.dims.x - 1);
    const double dy = spacing.y * (pred.dims.y - 1);
    const double dz = spacing.z * (pred.dims.z - 1);
    r.hd95 = r.asd = std::sqrt(dx * dx + dy * dy + dz * dz);
  }
  return r;
}

class TrainingSession {
 public:
  TrainingSession(TrainConfig cfg, const LoadedDataset& data)
      : cfg_(std::move(cfg)),
        data_(&data),
        net_(cfg_.network, cfg_.decoder_b, cfg_.seed),
        data_rng_(mix_seed(cfg_.seed, 0xda7aull)),
        composer_(&data.pool, data.split.labeled, data.split.unlabeled, cfg_.patch,
                  cfg_.labeled_per_batch, cfg_.batch_size - cfg_.labeled_per_batch) {
    cfg_.validate();
    for (const auto& pv : data.pool)
      require(pv.vol.dims.x >= cfg_.patch.shape.x && pv.vol.dims.y >= cfg_.patch.shape.y &&
                  pv.vol.dims.z >= cfg_.patch.shape.z,
              "volume ", pv.id, " (", pv.vol.dims.x, "x", pv.vol.dims.y, "x", pv.vol.dims.z,
              ") is smaller than the training patch");
    net_.visit_params([&](const std::string&, std::vector<float>& w, std::vector<float>&) {
      momentum_.emplace_back(w.size(), 0.0f);
    });
  }

  const TrainConfig& config() const { return cfg_; }
  DualDecoderNet<float>& net() { return net_; }
  std::int64_t iteration() const { return iter_; }
  double best_ensemble_dice() const { return best_dice_; }
  std::int64_t best_iteration() const { return best_iter_; }

  // One optimization step: compose a batch, forward both decoders, apply the
  // cycled consistency objective, backprop, SGD with momentum + weight decay.
  TrainLogRow step() {
    TrainingBatch batch = composer_.next(data_rng_);
    const double lr = lr_at(iter_, cfg_);

    auto out = net_.forward(batch.input, /*train=*/true);
    TotalLossConfig lcfg;
    lcfg.sharpening = cfg_.sharpening;
    lcfg.ramp = cfg_.ramp;
    lcfg.dice_epsilon = cfg_.dice_epsilon;
    lcfg.mode = cfg_.consistency;

    Tensor<float> dpa(out.pa.n, out.pa.c, out.pa.z, out.pa.y, out.pa.x);
    Tensor<float> dpb(out.pb.n, out.pb.c, out.pb.z, out.pb.y, out.pb.x);
    LossReport rep;
    try {
      rep = total_loss(out.pa, out.pb, batch.labels, batch.labeled_selector, iter_, lcfg,
                       &dpa, &dpb);
    } catch (const Error& e) {
      std::ostringstream ids;
      for (int id : batch.item_ids) ids << " " << id;
      fail("training aborted at iteration ", iter_, ": ", e.what(), " [batch ids:", ids.str(), "]");
    }

    net_.zero_grad();
    net_.backward(dpa, dpb);
    sgd_update(static_cast<float>(lr));
    ++iter_;
    return {iter_, rep.l_seg, rep.l_c, rep.lambda, lr};
  }

  // Sliding-window validation of decoder A, decoder B and their mean over
  // the held-out split. One forward per window serves all three outputs.
  std::vector<EvalRow> validate() {
    std::vector<EvalRow> rows;
    MetricReport sum_a, sum_b, sum_e;
    const auto& cases = data_->validation;
    require(!cases.empty(), "validation split is empty");
    for (const auto& vc : cases) {
      const WindowPlan plan = plan_windows(vc.vol.dims, cfg_.patch.shape, cfg_.eval_stride);
      WindowAccumulator acc_a(plan), acc_b(plan);
      Tensor<float> input(1, 1, plan.window.z, plan.window.y, plan.window.x);
      for (std::int64_t i = 0; i < plan.count(); ++i) {
        cut_window(vc.vol, plan.corner(i), plan.window, input);
        auto out = net_.forward(input, /*train=*/false);
        acc_a.add_window(i, out.pa);
        acc_b.add_window(i, out.pb);
      }
      const ProbabilityMap pa = acc_a.finalize(MapRole::decoder_a, vc.vol.spacing);
      const ProbabilityMap pb = acc_b.finalize(MapRole::decoder_b, vc.vol.spacing);
      ProbabilityMap pe(pa.dims, MapRole::ensemble, pa.spacing);
      for (std::size_t i = 0; i < pe.data.size(); ++i)
        pe.data[i] = 0.5f * (pa.data[i] + pb.data[i]);
      const float thr = static_cast<float>(cfg_.threshold);
      const MetricReport ra = evaluate_with_worst_case(threshold_map(pa, thr), vc.mask);
      const MetricReport rb = evaluate_with_worst_case(threshold_map(pb, thr), vc.mask);
      const MetricReport re = evaluate_with_worst_case(threshold_map(pe, thr), vc.mask);
      accumulate(sum_a, ra);
      accumulate(sum_b, rb);
      accumulate(sum_e, re);
    }
    const double n = static_cast<double>(cases.size());
    rows.push_back({iter_, "decoderA", scale(sum_a, 1.0 / n)});
    rows.push_back({iter_, "decoderB", scale(sum_b, 1.0 / n)});
    rows.push_back({iter_, "ensemble", scale(sum_e, 1.0 / n)});
    return rows;
  }

  void sgd_update(float lr) {
    const float mom = static_cast<float>(cfg_.momentum);
    const float wd = static_cast<float>(cfg_.weight_decay);
    std::size_t slot = 0;
    net_.visit_params([&](const std::string&, std::vector<float>& w, std::vector<float>& g) {
      std::vector<float>& buf = momentum_[slot++];
      for (std::size_t i = 0; i < w.size(); ++i) {
        const float dp = g[i] + wd * w[i];
        buf[i] = mom * buf[i] + dp;
        w[i] -= lr * buf[i];
      }
    });
  }

  // --- checkpoint / resume -------------------------------------------------

  void save_state(const std::string& path) {
    CheckpointExtras extras;
    extras.keys["iteration"] = std::to_string(iter_);
    extras.keys["best_dice"] = detail::format_g(best_dice_);
    extras.keys["best_iteration"] = std::to_string(best_iter_);
    extras.keys["rng"] = serialize_rng(data_rng_);
    extras.keys["labeled_queue"] = join(composer_.labeled_sampler().pending());
    extras.keys["unlabeled_queue"] = join(composer_.unlabeled_sampler().pending());
    std::size_t slot = 0;
    net_.visit_params([&](const std::string& name, std::vector<float>&, std::vector<float>&) {
      extras.arrays.emplace_back("momentum." + name, momentum_[slot++]);
    });
    save_checkpoint(path, net_, &extras);
  }

  void restore_state(const std::string& path) {
    CheckpointExtras extras;
    DualDecoderNet<float> loaded = load_checkpoint(path, &extras);
    require(loaded.config().levels == cfg_.network.levels &&
                loaded.decoder_b_kind() == cfg_.decoder_b,
            path, ": checkpoint does not match the configured network");
    net_ = std::move(loaded);
    iter_ = std::stoll(extras.keys.at("iteration"));
    best_dice_ = std::stod(extras.keys.at("best_dice"));
    best_iter_ = std::stoll(extras.keys.at("best_iteration"));
    data_rng_ = deserialize_rng(extras.keys.at("rng"));
    composer_.labeled_sampler().restore_pending(split_ints(extras.keys.at("labeled_queue")));
    composer_.unlabeled_sampler().restore_pending(split_ints(extras.keys.at("unlabeled_queue")));
    std::size_t slot = 0;
    net_.visit_params([&](const std::string& name, std::vector<float>&, std::vector<float>&) {
      const std::string key = "momentum." + name;
      for (auto& [n, arr] : extras.arrays)
        if (n == key) {
          require(arr.size() == momentum_[slot].size(), "momentum size mismatch for ", name);
          momentum_[slot] = arr;
        }
      ++slot;
    });
  }

  void note_eval(const std::vector<EvalRow>& rows) {
    for (const auto& r : rows)
      if (r.output == "ensemble" && r.metrics.dice > best_dice_) {
        best_dice_ = r.metrics.dice;
        best_iter_ = r.iter;
        improved_ = true;
      }
  }

  bool take_improved() { return std::exchange(improved_, false); }

 private:
  static void accumulate(MetricReport& acc, const MetricReport& r) {
    acc.dice += r.dice;
    acc.jaccard += r.jaccard;
    acc.hd95 += r.hd95;
    acc.asd += r.asd;
  }
  static MetricReport scale(MetricReport r, double f) {
    r.dice *= f;
    r.jaccard *= f;
    r.hd95 *= f;
    r.asd *= f;
    return r;
  }
  static std::string join(const std::vector<int>& v) {
    std::ostringstream oss;
    for (std::size_t i = 0; i < v.size(); ++i) oss << (i ? " " : "") << v[i];
    return oss.str();
  }
  static std::vector<int> split_ints(const std::string& s) {
    std::istringstream iss(s);
    std::vector<int> out;
    int v;
    while (iss >> v) out.push_back(v);
    return out;
  }

  TrainConfig cfg_;
  const LoadedDataset* data_;
  DualDecoderNet<float> net_;
  Rng data_rng_;
  BatchComposer composer_;
  std::vector<std::vector<float>> momentum_;
  std::int64_t iter_ = 0;
  double best_dice_ = -1.0;
  std::int64_t best_iter_ = 0;
  bool improved_ = false;
};

// ---------------------------------------------------------------------------
// Full experiment: train with periodic validation, persist the best-ensemble
// checkpoint, the final trainer state, CSV logs and a summary.

inline void write_train_log(const ExperimentLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open ", path, " for writing");
  out << "iter,l_seg,l_c,lambda,lr\n";
  for (const auto& r : log.train)
    out << r.iter << "," << detail::format_g(r.l_seg) << "," << detail::format_g(r.l_c) << ","
        << detail::format_g(r.lambda) << "," << detail::format_g(r.lr) << "\n";
  out.close();
  require(out.good(), "failed writing ", path);
}

inline void write_eval_log(const ExperimentLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), "cannot open ", path, " for writing");
  out << "iter,output,dice,jaccard,hd95,asd\n";
  for (const auto& r : log.evals)
    out << r.iter << "," << r.output << "," << detail::format_g(r.metrics.dice) << ","
        << detail::format_g(r.metrics.jaccard) << "," << detail::format_g(r.metrics.hd95) << ","
        << detail::format_g(r.metrics.asd) << "\n";
  out.close();
  require(out.good(), "failed writing ", path);
}

inline ExperimentResult run_experiment(const TrainConfig& cfg, const LoadedDataset& data,
                                       const std::string& out_dir, bool quiet = false) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  save_config(cfg, out_dir + "/config.txt");

  TrainingSession session(cfg, data);
  ExperimentResult result;
  for (std::int64_t t = 0; t < cfg.iterations; ++t) {
    result.log.train.push_back(session.step());
    const bool last = t + 1 == cfg.iterations;
    if ((t + 1) % cfg.eval_interval == 0 || last) {
      auto rows = session.validate();
      session.note_eval(rows);
      if (session.take_improved()) session.save_state(out_dir + "/best.ckpt");
      if (!quiet) {
        const auto& ens = rows.back();
        std::printf("[iter %6lld] l_seg=%.4f l_c=%.4f lambda=%.4f ens_dice=%.2f\n",
                    static_cast<long long>(ens.iter), result.log.train.back().l_seg,
                    result.log.train.back().l_c, result.log.train.back().lambda,
                    ens.metrics.dice);
        std::fflush(stdout);
      }
      for (auto& r : rows) result.log.evals.push_back(std::move(r));
    }
  }
  session.save_state(out_dir + "/final.ckpt");
  write_train_log(result.log, out_dir + "/train_log.csv");
  write_eval_log(result.log, out_dir + "/eval_log.csv");

  result.best_ensemble_dice = session.best_ensemble_dice();
  result.best_iteration = session.best_iteration();
  result.param_checksum = parameter_checksum(session.net());
  for (auto it = result.log.evals.rbegin(); it != result.log.evals.rend(); ++it) {
    if (it->iter != cfg.iterations) break;
    if (it->output == "ensemble") result.final_ensemble = it->metrics;
    if (it->output == "decoderA") result.final_decoder_a = it->metrics;
    if (it->output == "decoderB") result.final_decoder_b = it->metrics;
  }

  std::ofstream sum(out_dir + "/summary.txt", std::ios::trunc);
  sum << "iterations = " << cfg.iterations << "\n";
  sum << "best_iteration = " << result.best_iteration << "\n";
  sum << "best_ensemble_dice = " << detail::format_g(result.best_ensemble_dice) << "\n";
  sum << "final_ensemble_dice = " << detail::format_g(result.final_ensemble.dice) << "\n";
  sum << "final_decoderA_dice = " << detail::format_g(result.final_decoder_a.dice) << "\n";
  sum << "final_decoderB_dice = " << detail::format_g(result.final_decoder_b.dice) << "\n";
  sum << "param_checksum = " << result.param_checksum << "\n";
  return result;
}

}  // namespace mcseg
