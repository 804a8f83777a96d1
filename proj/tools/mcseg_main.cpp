// mcseg: desk-scale laboratory for mutual-consistency semi-supervised 3D
// segmentation. Subcommands: synth-data, train, infer, evaluate,
// uncertainty-map.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mcseg/mcseg.hpp"

namespace {

mcseg::Dim3 to_dim3(const std::vector<int>& v, const char* what) {
  mcseg::require(v.size() == 3, what, " expects three integers");
  return {v[0], v[1], v[2]};
}

struct WindowArgs {
  std::vector<int> window = {48, 48, 32};
  std::vector<int> stride = {24, 24, 16};

  void attach(CLI::App* cmd) {
    cmd->add_option("--window", window, "window shape (x y z voxels)")->expected(3);
    cmd->add_option("--stride", stride, "window stride (x y z voxels)")->expected(3);
  }
  mcseg::WindowPlan plan(mcseg::Dim3 vol) const {
    return mcseg::plan_windows(vol, to_dim3(window, "--window"), to_dim3(stride, "--stride"));
  }
};

int cmd_synth_data(const std::string& out_dir, mcseg::SyntheticSpec spec, double labeled_ratio,
                   int validation_count, const std::vector<double>& spacing) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  const mcseg::DatasetSplit split =
      mcseg::make_split(spec.count, validation_count, labeled_ratio, spec.seed);
  mcseg::write_split_manifest(split, out_dir + "/split.txt");
  for (int i = 0; i < spec.count; ++i) {
    auto [vol, mask] = mcseg::generate_synthetic_sample(spec, i);
    vol.spacing = mask.spacing = {spacing[0], spacing[1], spacing[2]};
    mcseg::write_volume(vol, mcseg::image_path(out_dir, i));
    mcseg::write_mask(mask, mcseg::label_path(out_dir, i));
  }
  std::printf("wrote %d volumes to %s (%zu labeled / %zu unlabeled / %zu validation)\n",
              spec.count, out_dir.c_str(), split.labeled.size(), split.unlabeled.size(),
              split.validation.size());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& preset,
              const std::string& data_dir, const std::string& out_dir,
              const std::string& resume, bool quiet) {
  mcseg::TrainConfig cfg = preset.empty() ? mcseg::TrainConfig{} : mcseg::preset_by_name(preset);
  if (!config_path.empty()) cfg = mcseg::load_config(config_path, cfg);
  cfg.validate();

  const mcseg::LoadedDataset data = mcseg::load_dataset(data_dir, cfg.crop_margin);
  if (resume.empty()) {
    mcseg::run_experiment(cfg, data, out_dir, quiet);
    return 0;
  }

  // resume: replay the remaining iterations from the saved trainer state
  std::filesystem::create_directories(out_dir);
  mcseg::save_config(cfg, out_dir + "/config.txt");
  mcseg::TrainingSession session(cfg, data);
  session.restore_state(resume);
  mcseg::ExperimentLog log;
  while (session.iteration() < cfg.iterations) {
    log.train.push_back(session.step());
    const bool last = session.iteration() == cfg.iterations;
    if (session.iteration() % cfg.eval_interval == 0 || last) {
      auto rows = session.validate();
      session.note_eval(rows);
      if (session.take_improved()) session.save_state(out_dir + "/best.ckpt");
      if (!quiet)
        std::printf("[iter %6lld] ens_dice=%.2f\n",
                    static_cast<long long>(session.iteration()), rows.back().metrics.dice);
      for (auto& r : rows) log.evals.push_back(std::move(r));
    }
  }
  session.save_state(out_dir + "/final.ckpt");
  mcseg::write_train_log(log, out_dir + "/train_log.csv");
  mcseg::write_eval_log(log, out_dir + "/eval_log.csv");
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& input, const std::string& prob_out,
              const std::string& mask_out, const WindowArgs& win, double threshold,
              const std::string& output, bool normalize) {
  mcseg::DualDecoderNet<float> net = mcseg::load_checkpoint(ckpt);
  mcseg::Volume vol = mcseg::read_volume(input);
  if (normalize) mcseg::normalize_intensity(vol);
  const mcseg::WindowPlan plan = win.plan(vol.dims);
  net.config().check_input_dims(plan.window);

  auto model = [&](const mcseg::Tensor<float>& in) {
    auto out = net.forward(in, false);
    if (output == "decoderA") return out.pa;
    if (output == "decoderB") return out.pb;
    mcseg::Tensor<float> ens(out.pa.n, out.pa.c, out.pa.z, out.pa.y, out.pa.x);
    for (std::int64_t i = 0; i < ens.numel(); ++i)
      ens.v[i] = 0.5f * (out.pa.v[i] + out.pb.v[i]);
    return ens;
  };
  auto [pmap, mask] = mcseg::segment_volume(model, vol, plan, static_cast<float>(threshold));
  if (!prob_out.empty()) mcseg::write_probability_map(pmap, prob_out);
  if (!mask_out.empty()) mcseg::write_mask(mask, mask_out);
  std::printf("windows=%lld foreground_voxels=%lld of %lld\n",
              static_cast<long long>(plan.count()),
              static_cast<long long>(mask.foreground_count()),
              static_cast<long long>(mask.dims.voxels()));
  return 0;
}

int cmd_evaluate(const std::string& pred_path, const std::string& gt_path, const std::string& id,
                 bool header, bool mm) {
  const mcseg::LabelMask pred = mcseg::read_mask(pred_path);
  const mcseg::LabelMask gt = mcseg::read_mask(gt_path);
  auto [dice, jaccard] = mcseg::overlap_metrics(pred, gt);
  auto [hd95, asd] = mcseg::surface_distances(pred, gt);  // voxel units
  if (header) std::printf("id,dice,jaccard,hd95,asd%s\n", mm ? ",hd95_mm,asd_mm" : "");
  std::printf("%s,%.4f,%.4f,%.4f,%.4f", id.c_str(), dice, jaccard, hd95, asd);
  if (mm) {
    auto [hd95_mm, asd_mm] = mcseg::surface_distances(pred, gt, gt.spacing);
    std::printf(",%.4f,%.4f", hd95_mm, asd_mm);
  }
  std::printf("\n");
  return 0;
}

int cmd_uncertainty(const std::string& ckpt, const std::string& input, const std::string& out,
                    const WindowArgs& win, const std::string& method, int passes,
                    std::uint64_t seed, double above, bool normalize) {
  mcseg::DualDecoderNet<float> net = mcseg::load_checkpoint(ckpt);
  mcseg::Volume vol = mcseg::read_volume(input);
  if (normalize) mcseg::normalize_intensity(vol);
  const mcseg::WindowPlan plan = win.plan(vol.dims);
  net.config().check_input_dims(plan.window);

  auto sweep = [&](auto&& window_model, mcseg::MapRole role) {
    mcseg::WindowAccumulator acc(plan);
    mcseg::Tensor<float> in(1, 1, plan.window.z, plan.window.y, plan.window.x);
    for (std::int64_t i = 0; i < plan.count(); ++i) {
      mcseg::cut_window(vol, plan.corner(i), plan.window, in);
      acc.add_window(i, window_model(in, i));
    }
    return acc.finalize(role, vol.spacing);
  };

  mcseg::UncertaintyMap umap;
  if (method == "mc_dropout") {
    mcseg::require(net.config().dropout_rate > 0.0,
                   "checkpoint was built with dropout_rate 0; mc_dropout needs dropout");
    umap = mcseg::mc_dropout_uncertainty(
        [&](std::uint64_t pass_seed) {
          return sweep(
              [&](const mcseg::Tensor<float>& in, std::int64_t widx) {
                auto o = net.forward_with_dropout(in, mcseg::mix_seed(pass_seed, widx));
                mcseg::Tensor<float> ens(o.pa.n, o.pa.c, o.pa.z, o.pa.y, o.pa.x);
                for (std::int64_t i = 0; i < ens.numel(); ++i)
                  ens.v[i] = 0.5f * (o.pa.v[i] + o.pb.v[i]);
                return ens;
              },
              mcseg::MapRole::ensemble);
        },
        passes, seed);
  } else if (method == "decoder_discrepancy") {
    const auto pa = sweep([&](const mcseg::Tensor<float>& in, std::int64_t) {
      return net.forward(in, false).pa;
    }, mcseg::MapRole::decoder_a);
    const auto pb = sweep([&](const mcseg::Tensor<float>& in, std::int64_t) {
      return net.forward(in, false).pb;
    }, mcseg::MapRole::decoder_b);
    umap = mcseg::decoder_discrepancy(pa, pb);
  } else {
    mcseg::fail("unknown method '", method, "' (expected mc_dropout or decoder_discrepancy)");
  }

  mcseg::Volume as_vol(umap.dims, umap.spacing);
  for (std::size_t i = 0; i < umap.data.size(); ++i)
    as_vol.data[i] = static_cast<float>(umap.data[i]);
  mcseg::write_volume(as_vol, out);
  const auto s = mcseg::summarize_uncertainty(umap, above);
  std::printf("method=%s passes=%d mean=%.6f max=%.6f fraction_above_%.3g=%.6f\n",
              mcseg::uncertainty_method_name(umap.method), umap.n_passes, s.mean, s.max,
              above, s.fraction_above);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mutual-consistency semi-supervised 3D segmentation lab"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate a seeded synthetic dataset");
  std::string synth_out;
  mcseg::SyntheticSpec spec;
  std::vector<int> synth_shape = {64, 64, 64};
  std::vector<double> synth_spacing = {1.0, 1.0, 1.0};
  double synth_ratio = 0.1;
  int synth_val = 8;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", spec.count, "number of volumes");
  synth->add_option("--shape", synth_shape, "volume shape (x y z)")->expected(3);
  synth->add_option("--labeled-ratio", synth_ratio, "fraction of training ids with labels");
  synth->add_option("--validation", synth_val, "number of validation volumes");
  synth->add_option("--blur", spec.blur_sigma, "boundary blur sigma (voxels)");
  synth->add_option("--noise", spec.noise_sigma, "additive gaussian noise sigma");
  synth->add_option("--max-lobes", spec.max_lobes, "lobes per sample drawn from 1..k");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--spacing", synth_spacing, "voxel spacing in mm (x y z)")->expected(3);

  // train
  auto* train = app.add_subcommand("train", "run a training experiment");
  std::string train_config, train_preset, train_data, train_out, train_resume;
  bool train_quiet = false;
  train->add_option("--config", train_config, "config file (applied over the preset)");
  train->add_option("--preset", train_preset, "desk or paper-la");
  train->add_option("--data", train_data, "dataset directory (with split.txt)")->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--resume", train_resume, "trainer checkpoint to resume from");
  train->add_flag("--quiet", train_quiet, "suppress progress lines");

  // infer
  auto* infer = app.add_subcommand("infer", "sliding-window segmentation of a volume");
  std::string inf_ckpt, inf_input, inf_prob, inf_mask, inf_output = "ensemble";
  WindowArgs inf_win;
  double inf_threshold = 0.5;
  bool inf_norm = false;
  infer->add_option("--checkpoint", inf_ckpt, "network checkpoint")->required();
  infer->add_option("--input", inf_input, "input volume container")->required();
  infer->add_option("--prob-out", inf_prob, "output probability map path");
  infer->add_option("--mask-out", inf_mask, "output mask path");
  inf_win.attach(infer);
  infer->add_option("--threshold", inf_threshold, "binarization threshold");
  infer->add_option("--output", inf_output, "ensemble | decoderA | decoderB");
  infer->add_flag("--normalize", inf_norm, "zero-mean/unit-variance the input first");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "metrics for a predicted mask vs ground truth");
  std::string ev_pred, ev_gt, ev_id = "case";
  bool ev_header = false, ev_mm = false;
  eval->add_option("--pred", ev_pred, "predicted mask container")->required();
  eval->add_option("--gt", ev_gt, "ground-truth mask container")->required();
  eval->add_option("--id", ev_id, "row identifier");
  eval->add_flag("--header", ev_header, "print the CSV header line first");
  eval->add_flag("--mm", ev_mm, "append distances in mm using the container spacing");

  // uncertainty-map
  auto* unc = app.add_subcommand("uncertainty-map", "voxelwise epistemic uncertainty");
  std::string unc_ckpt, unc_input, unc_out, unc_method = "mc_dropout";
  WindowArgs unc_win;
  int unc_passes = 8;
  std::uint64_t unc_seed = 1;
  double unc_above = 0.1;
  bool unc_norm = false;
  unc->add_option("--checkpoint", unc_ckpt, "network checkpoint")->required();
  unc->add_option("--input", unc_input, "input volume container")->required();
  unc->add_option("--out", unc_out, "output uncertainty container")->required();
  unc_win.attach(unc);
  unc->add_option("--method", unc_method, "mc_dropout | decoder_discrepancy");
  unc->add_option("--passes", unc_passes, "stochastic passes for mc_dropout");
  unc->add_option("--seed", unc_seed, "seed for the stochastic passes");
  unc->add_option("--above", unc_above, "threshold for the fraction-above summary");
  unc->add_flag("--normalize", unc_norm, "zero-mean/unit-variance the input first");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      spec.shape = to_dim3(synth_shape, "--shape");
      return cmd_synth_data(synth_out, spec, synth_ratio, synth_val, synth_spacing);
    }
    if (train->parsed())
      return cmd_train(train_config, train_preset, train_data, train_out, train_resume,
                       train_quiet);
    if (infer->parsed())
      return cmd_infer(inf_ckpt, inf_input, inf_prob, inf_mask, inf_win, inf_threshold,
                       inf_output, inf_norm);
    if (eval->parsed()) return cmd_evaluate(ev_pred, ev_gt, ev_id, ev_header, ev_mm);
    if (unc->parsed())
      return cmd_uncertainty(unc_ckpt, unc_input, unc_out, unc_win, unc_method, unc_passes,
                             unc_seed, unc_above, unc_norm);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
