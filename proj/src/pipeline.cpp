#include "duat/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>

#include "duat/checkpoint.hpp"
#include "duat/data.hpp"
#include "duat/gradcheck.hpp"
#include "duat/loss.hpp"
#include "duat/optim.hpp"

namespace fs = std::filesystem;

namespace duat {

DuatConfig model_config_from(const Config& cfg) {
  DuatConfig mc;
  mc.encoder.depths = cfg.get_int_list("encoder.depths");
  mc.encoder.dims = cfg.get_int_list("encoder.dims");
  mc.encoder.heads = cfg.get_int_list("encoder.heads");
  mc.encoder.sr_ratios = cfg.get_int_list("encoder.sr_ratios");
  mc.encoder.mlp_ratio = cfg.get_int("encoder.mlp_ratio");
  mc.arrangement = parse_arrangement(cfg.get("model.arrangement"));
  mc.use_sba = cfg.get_bool("model.use_sba");
  mc.use_glsa = cfg.get_bool("model.use_glsa");
  mc.fuse_f2 = cfg.get_bool("model.fuse_f2");
  mc.input_h = mc.input_w = cfg.get_int("model.input_size");
  mc.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  mc.validate();
  return mc;
}

LossConfig loss_config_from(const Config& cfg) {
  LossConfig lc;
  lc.lambda_iou = cfg.get_double("loss.lambda_iou");
  lc.lambda_bce = cfg.get_double("loss.lambda_bce");
  lc.weight_mu = cfg.get_double("loss.weight_mu");
  lc.weight_radius_base = cfg.get_int("loss.weight_radius_base");
  lc.validate();
  return lc;
}

namespace {

AdamW::Options optim_from(const Config& cfg) {
  AdamW::Options o;
  o.lr = cfg.get_double("optim.lr");
  o.weight_decay = cfg.get_double("optim.weight_decay");
  o.beta1 = cfg.get_double("optim.beta1");
  o.beta2 = cfg.get_double("optim.beta2");
  o.eps = cfg.get_double("optim.eps");
  return o;
}

Precision precision_from(const Config& cfg) {
  const std::string& p = cfg.get("train.precision");
  if (p == "f32") return Precision::f32;
  if (p == "f64") return Precision::f64;
  throw DataError("config: train.precision must be f32 or f64, got '" + p + "'");
}

// Scoped engine precision switch.
struct PrecisionScope {
  explicit PrecisionScope(Precision p) : prev(Engine::precision) { Engine::precision = p; }
  ~PrecisionScope() { Engine::precision = prev; }
  Precision prev;
};

std::vector<data::Sample> load_all(const std::string& manifest_path) {
  std::vector<data::Sample> samples;
  for (const auto& e : data::read_manifest(manifest_path)) {
    samples.push_back(data::load_sample(e));
  }
  if (samples.empty()) throw DataError("manifest " + manifest_path + " lists no samples");
  return samples;
}

Tensor stack_images(const std::vector<data::Sample>& samples, const std::vector<int>& idx) {
  const Shape s0 = samples[static_cast<std::size_t>(idx[0])].image.shape();
  Tensor batch = make_tensor(Shape{static_cast<int>(idx.size()), s0.c, s0.h, s0.w}, false);
  const std::int64_t per = s0.numel();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const Tensor& img = samples[static_cast<std::size_t>(idx[i])].image;
    if (!(img.shape() == s0)) throw ShapeError("batch: mixed sample shapes");
    std::copy(img.data(), img.data() + per, batch.mutable_data() + i * per);
  }
  return batch;
}

Tensor stack_tensors(const std::vector<Tensor>& parts) {
  const Shape s0 = parts[0].shape();
  Tensor batch = make_tensor(Shape{static_cast<int>(parts.size()), s0.c, s0.h, s0.w}, false);
  const std::int64_t per = s0.numel();
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy(parts[i].data(), parts[i].data() + per, batch.mutable_data() + i * per);
  }
  return batch;
}

// Mean dice of thresholded predictions over a sample set (eval mode).
EvalReport evaluate_model(DuatModel& model, const std::vector<data::Sample>& samples) {
  model.set_training(false);
  std::vector<SampleMetrics> metrics;
  metrics.reserve(samples.size());
  for (const auto& s : samples) {
    Prediction pred = model.forward(s.image);
    Tensor prob = ops::sigmoid(pred.s1);
    Tensor mask = make_tensor(prob.shape(), false);
    const double* p = prob.data();
    double* m = mask.mutable_data();
    for (std::int64_t i = 0; i < prob.numel(); ++i) m[i] = p[i] >= 0.5 ? 1.0 : 0.0;
    metrics.push_back(evaluate_sample(s.id, mask, prob, s.mask));
  }
  return build_report(std::move(metrics), EvalReport::default_bin_edges());
}

std::string timestamp_now() {
  const std::time_t t = std::time(nullptr);
  char buf[64];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", std::gmtime(&t));
  return buf;
}

}  // namespace

TrainOutcome run_train(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  cfg.write((fs::path(out_dir) / "config.txt").string());

  const std::string train_manifest = cfg.get("train.manifest");
  if (train_manifest.empty()) throw DataError("train: train.manifest not set");
  auto train_set = load_all(train_manifest);
  std::vector<data::Sample> val_set;
  if (!cfg.get("train.val_manifest").empty()) {
    val_set = load_all(cfg.get("train.val_manifest"));
  }

  PrecisionScope precision(precision_from(cfg));
  const bool strict_prev = Engine::strict_finite_checks;
  Engine::strict_finite_checks = false;  // sampled checks during training
  struct StrictRestore {
    bool prev;
    ~StrictRestore() { Engine::strict_finite_checks = prev; }
  } restore{strict_prev};

  DuatConfig mc = model_config_from(cfg);
  const Shape ss = train_set[0].image.shape();
  mc.input_h = ss.h;
  mc.input_w = ss.w;
  DuatModel model(mc);
  model.set_training(true);
  AdamW optimizer(model.named_params(), optim_from(cfg));
  const LossConfig loss_cfg = loss_config_from(cfg);

  const int total_steps = cfg.get_int("train.steps");
  const int batch_size = std::max(1, cfg.get_int("train.batch"));
  const int val_every = std::max(1, cfg.get_int("train.val_every"));
  const bool use_augment = cfg.get_bool("train.augment");
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed"));

  TrainOutcome outcome;
  outcome.log_path = (fs::path(out_dir) / "train.log").string();
  outcome.final_checkpoint = (fs::path(out_dir) / "ckpt_final.duat").string();
  outcome.best_checkpoint = (fs::path(out_dir) / "ckpt_best.duat").string();
  std::ofstream log(outcome.log_path, std::ios::trunc);
  if (!log) throw DataError("train: cannot write " + outcome.log_path);
  log << "# train started_at=" << timestamp_now() << "\n";

  char line[256];
  int step = 0;
  int epoch = 0;
  double best_val = -1.0;
  while (step < total_steps) {
    ++epoch;
    // Deterministic epoch order.
    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng = Rng::for_stream(seed, 0x6f726472ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.next_u64() % i)]);
    }

    for (std::size_t pos = 0; pos < order.size() && step < total_steps; pos += batch_size) {
      const std::size_t end = std::min(pos + static_cast<std::size_t>(batch_size), order.size());
      std::vector<int> idx(order.begin() + pos, order.begin() + end);

      Tensor images, masks;
      if (use_augment) {
        Rng aug_rng = Rng::for_stream(seed, 0x617567ULL * 1000003ULL + step);
        std::vector<Tensor> imgs, msks;
        for (int i : idx) {
          data::Sample a = data::augment(train_set[static_cast<std::size_t>(i)], aug_rng);
          imgs.push_back(a.image);
          msks.push_back(a.mask);
        }
        images = stack_tensors(imgs);
        masks = stack_tensors(msks);
      } else {
        images = stack_images(train_set, idx);
        std::vector<Tensor> msks;
        for (int i : idx) msks.push_back(train_set[static_cast<std::size_t>(i)].mask);
        masks = stack_tensors(msks);
      }

      model.set_training(true);
      Tape tape;
      double loss_value;
      {
        Tape::Scope scope(tape);
        Prediction pred = model.forward(images);
        Tensor loss = total_loss(pred, masks, loss_cfg);
        loss_value = loss.item();
        if (!std::isfinite(loss_value)) {
          throw NumericError("train: loss diverged at step " + std::to_string(step));
        }
        tape.backward(loss);
      }
      optimizer.step();
      ++step;
      std::snprintf(line, sizeof(line), "step=%d epoch=%d loss=%.6f", step, epoch, loss_value);
      log << line << "\n";
    }

    if (!val_set.empty() && (epoch % val_every == 0 || step >= total_steps)) {
      EvalReport val = evaluate_model(model, val_set);
      std::snprintf(line, sizeof(line), "epoch=%d val_mdice=%.6f val_mae=%.6f", epoch,
                    val.mean_dice, val.mean_mae);
      log << line << "\n";
      if (val.mean_dice > best_val) {
        best_val = val.mean_dice;
        save_checkpoint(outcome.best_checkpoint, model);
        std::snprintf(line, sizeof(line), "epoch=%d best_val_mdice=%.6f", epoch, best_val);
        log << line << "\n";
      }
    }
  }

  EvalReport train_eval = evaluate_model(model, train_set);
  outcome.final_train_mdice = train_eval.mean_dice;
  outcome.best_val_mdice = best_val;
  outcome.steps_run = step;
  save_checkpoint(outcome.final_checkpoint, model);
  if (val_set.empty()) {
    // No validation stream: the final state doubles as "best".
    save_checkpoint(outcome.best_checkpoint, model);
  }
  std::snprintf(line, sizeof(line), "final steps=%d train_mdice=%.6f", step,
                outcome.final_train_mdice);
  log << line << "\n";
  return outcome;
}

EvalReport run_eval(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string ckpt = cfg.get("eval.checkpoint");
  const std::string manifest = cfg.get("eval.manifest");
  if (ckpt.empty() || manifest.empty()) {
    throw DataError("eval: eval.checkpoint and eval.manifest must be set");
  }
  PrecisionScope precision(precision_from(cfg));
  auto samples = load_all(manifest);
  DuatConfig mc = model_config_from(cfg);
  const Shape ss = samples[0].image.shape();
  mc.input_h = ss.h;
  mc.input_w = ss.w;
  DuatModel model(mc);
  load_checkpoint(ckpt, model);
  EvalReport report = evaluate_model(model, samples);
  write_report(report, (fs::path(out_dir) / "report.txt").string(),
               (fs::path(out_dir) / "size_curve.dat").string());
  return report;
}

void run_synth(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  cfg.write((fs::path(out_dir) / "config.txt").string());
  data::GenSpec spec;
  spec.height = spec.width = cfg.get_int("synth.size");
  spec.objects_min = cfg.get_int("synth.objects_min");
  spec.objects_max = cfg.get_int("synth.objects_max");
  spec.fraction_min = cfg.get_double("synth.fraction_min");
  spec.fraction_max = cfg.get_double("synth.fraction_max");
  spec.blur_sigma = cfg.get_double("synth.blur_sigma");
  spec.contrast = cfg.get_double("synth.contrast");
  spec.noise = cfg.get_double("synth.noise");
  spec.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));

  auto samples = data::generate(spec, cfg.get_int("synth.count"));
  auto split = data::split(std::move(samples), cfg.get_double("synth.train_ratio"),
                           cfg.get_double("synth.val_ratio"), cfg.get_double("synth.test_ratio"),
                           spec.seed);
  data::write_dataset(split.train, (fs::path(out_dir) / "train").string(), "manifest.tsv");
  data::write_dataset(split.val, (fs::path(out_dir) / "val").string(), "manifest.tsv");
  data::write_dataset(split.test, (fs::path(out_dir) / "test").string(), "manifest.tsv");
}

std::string run_predict(const Config& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const std::string ckpt = cfg.get("predict.checkpoint");
  const std::string input = cfg.get("predict.input");
  if (ckpt.empty()) throw DataError("predict: predict.checkpoint not set");
  if (input.empty()) throw DataError("predict: predict.input not set");
  PrecisionScope precision(precision_from(cfg));
  Tensor image = data::read_ppm(input);
  DuatConfig mc = model_config_from(cfg);
  mc.input_h = image.h();
  mc.input_w = image.w();
  DuatModel model(mc);
  load_checkpoint(ckpt, model);
  model.set_training(false);
  Tensor mask = model.predict(image);
  const std::string out_path =
      (fs::path(out_dir) / (fs::path(input).stem().string() + "_mask.pgm")).string();
  data::write_pgm(out_path, mask);
  return out_path;
}

int run_gradcheck(const Config& cfg, std::ostream& os) {
  PrecisionScope precision(Precision::f64);  // gradient checks need the headroom
  const std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  auto cases = gradcheck_suite(seed);
  int failures = 0;
  char line[160];
  os << "op                                   max_rel_err   coords  status\n";
  for (auto& c : cases) {
    GradCheckResult r = c.run();
    const bool ok = r.passed();
    failures += ok ? 0 : 1;
    std::snprintf(line, sizeof(line), "%-36s %11.3e %8lld  %s", r.name.c_str(), r.max_rel_error,
                  static_cast<long long>(r.coords_checked), ok ? "PASS" : "FAIL");
    os << line << "\n";
  }
  os << (failures == 0 ? "gradcheck: all ops within 1e-4\n"
                       : "gradcheck: " + std::to_string(failures) + " failure(s)\n");
  return failures;
}

CountReport run_count(const Config& cfg) {
  PrecisionScope precision(Precision::f64);
  DuatConfig mc = model_config_from(cfg);
  DuatModel model(mc);
  model.set_training(false);

  CountReport report;
  report.params = model.param_count();
  for (const auto& p : model.named_params()) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    bool merged = false;
    for (auto& [name, count] : report.param_groups) {
      if (name == group) {
        count += p.tensor->numel();
        merged = true;
        break;
      }
    }
    if (!merged) report.param_groups.emplace_back(group, p.tensor->numel());
  }

  CostMeter meter;
  {
    CostMeter::Use use(meter);
    Tensor input = Tensor::zeros(Shape{1, 3, mc.input_h, mc.input_w});
    model.forward(input);
  }
  report.macs = meter.total_macs();
  report.mac_sections = meter.sections();
  return report;
}

void print_count(const CountReport& report, const Config& cfg, std::ostream& os) {
  char line[160];
  os << "parameter counts (exact)\n";
  for (const auto& [name, count] : report.param_groups) {
    std::snprintf(line, sizeof(line), "  %-24s %12lld", name.c_str(),
                  static_cast<long long>(count));
    os << line << "\n";
  }
  std::snprintf(line, sizeof(line), "  %-24s %12lld", "total",
                static_cast<long long>(report.params));
  os << line << "\n";
  os << "multiply-accumulates, one forward at input_size="
     << cfg.get("model.input_size") << " (batch 1; conv/matmul terms only)\n";
  for (const auto& [name, macs] : report.mac_sections) {
    std::snprintf(line, sizeof(line), "  %-24s %12lld", name.c_str(),
                  static_cast<long long>(macs));
    os << line << "\n";
  }
  std::snprintf(line, sizeof(line), "  %-24s %12lld", "total",
                static_cast<long long>(report.macs));
  os << line << "\n";
  os << "full-scale reference configuration: 24.92M params / 9.88G FLOPs "
        "(352x352 input; not asserted at this scale)\n";
}

std::string variant_display_name(const std::string& token) {
  if (token == "gsa_only") return "+ GSA";
  if (token == "lsa_only") return "+ LSA";
  if (token == "serial_gsa_lsa") return "+ GSA + LSA (Serial)";
  if (token == "serial_lsa_gsa") return "+ LSA + GSA (Serial)";
  if (token == "wo_sba") return "w/o SBA";
  if (token == "wo_glsa") return "w/o GLSA";
  if (token == "full") return "SBA + GLSA (Ours)";
  throw DataError("ablate: unknown variant '" + token + "'");
}

Config apply_variant(const Config& base, const std::string& token) {
  Config cfg = base;
  cfg.set("model.use_sba", "true");
  cfg.set("model.use_glsa", "true");
  cfg.set("model.arrangement", "parallel");
  if (token == "gsa_only" || token == "lsa_only" || token == "serial_gsa_lsa" ||
      token == "serial_lsa_gsa") {
    cfg.set("model.use_sba", "false");
    cfg.set("model.arrangement", token);
  } else if (token == "wo_sba") {
    cfg.set("model.use_sba", "false");
  } else if (token == "wo_glsa") {
    cfg.set("model.use_glsa", "false");
  } else if (token != "full") {
    throw DataError("ablate: unknown variant '" + token + "'");
  }
  return cfg;
}

std::vector<VariantResult> run_ablate(const Config& cfg, const std::string& out_dir,
                                      std::ostream& os) {
  fs::create_directories(out_dir);
  std::vector<std::string> tokens;
  {
    std::string list = cfg.get("ablate.variants");
    std::size_t start = 0;
    while (start <= list.size()) {
      const std::size_t comma = list.find(',', start);
      const std::string tok = list.substr(start, comma == std::string::npos ? std::string::npos
                                                                            : comma - start);
      if (!tok.empty()) tokens.push_back(tok);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  if (tokens.empty()) throw DataError("ablate: no variants configured");

  std::vector<VariantResult> results;
  for (const auto& token : tokens) {
    Config vcfg = apply_variant(cfg, token);
    const std::string vdir = (fs::path(out_dir) / token).string();
    TrainOutcome outcome = run_train(vcfg, vdir);
    Config ecfg = vcfg;
    ecfg.set("eval.checkpoint", outcome.best_checkpoint);
    VariantResult r;
    r.token = token;
    r.display = variant_display_name(token);
    r.report = run_eval(ecfg, vdir);
    results.push_back(std::move(r));
  }

  std::ofstream table((fs::path(out_dir) / "ablation_table.txt").string(), std::ios::trunc);
  char line[160];
  auto emit = [&](const std::string& text) {
    table << text << "\n";
    os << text << "\n";
  };
  std::snprintf(line, sizeof(line), "%-24s %8s %8s %8s", "variant", "mDice", "mIoU", "MAE");
  emit(line);
  for (const auto& r : results) {
    std::snprintf(line, sizeof(line), "%-24s %8.3f %8.3f %8.3f", r.display.c_str(),
                  r.report.mean_dice, r.report.mean_iou, r.report.mean_mae);
    emit(line);
  }
  return results;
}

}  // namespace duat
