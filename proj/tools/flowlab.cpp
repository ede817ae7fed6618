// flowlab: normalizing-flow density estimation and likelihood-gap analysis.
//
// Subcommands: train, eval, predict-gap, simulate-bounds, stats, sample,
// checks. Every run is a pure function of (inputs, seed) and writes a
// manifest next to its outputs.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"

#include "flowlab/checkpoint.hpp"
#include "flowlab/data.hpp"
#include "flowlab/errors.hpp"
#include "flowlab/report.hpp"
#include "flowlab/tensor_io.hpp"
#include "flowlab/trainer.hpp"

namespace fl = flowlab;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 ok, 2 usage/config, 3 numeric failure, 4 I/O.
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// flat key=value configuration with flag > file > default precedence

struct KvConfig {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv[key] = value; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
  }
  double get_double(const std::string& key, double fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      return std::stod(it->second);
    } catch (...) {
      throw fl::InvalidConfig("config key '" + key + "' is not a number: " + it->second);
    }
  }
  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
      return std::stoull(it->second);
    } catch (...) {
      throw fl::InvalidConfig("config key '" + key + "' is not a count: " + it->second);
    }
  }
  bool get_bool(const std::string& key, bool fallback) const {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    return it->second == "1" || it->second == "true" || it->second == "on";
  }
};

KvConfig load_kv_file(const std::string& path) {
  KvConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw fl::IoError("cannot open config file " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) cfg.kv[key] = value;
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// manifests

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_manifest(const std::string& out_dir, const std::string& subcommand, const KvConfig& cfg,
                    std::uint64_t seed, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["seed"] = seed;
  j["config"] = cfg.kv;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  j["code_version"] = kVersion;
  j["timestamp_utc"] = utc_timestamp();
  fl::write_json((fs::path(out_dir) / "manifest.json").string(), j);
}

// ---------------------------------------------------------------------------
// dataset / model / training resolution

fl::Shape example_shape_from(const KvConfig& cfg) {
  if (cfg.has("height") || cfg.has("width") || cfg.has("channels")) {
    return {cfg.get_size("height", 8), cfg.get_size("width", 8), cfg.get_size("channels", 1)};
  }
  return {cfg.get_size("dims", 2)};
}

bool looks_scaled(const fl::Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < 0.0 || t[i] >= 1.0) return false;
  }
  return t.size() > 0;
}

fl::Dataset resolve_dataset(const KvConfig& cfg, const std::string& spec, fl::Rng& rng) {
  const std::size_t n = cfg.get_size("n", 4096);
  if (spec == "two-moons") {
    const double noise = cfg.get_double("noise", 0.1);
    const std::size_t dims = cfg.get_size("dims", 2);
    if (dims == 2) return fl::gen_two_moons(n, noise, rng);
    fl::Dataset base = fl::gen_two_moons(n, 0.0, rng);
    return fl::replicate_dims(base, dims, noise, rng);
  }
  if (spec == "cv-gaussian") {
    const std::size_t dims = cfg.get_size("dims", 2);
    const std::vector<double> mean(dims, cfg.get_double("data_mean", 0.0));
    const std::vector<double> var(dims, cfg.get_double("data_var", 0.25));
    return fl::gen_diag_gaussian(n, mean, var, rng);
  }
  if (spec == "constant") {
    return fl::gen_constant(cfg.get_double("value", 128.0), example_shape_from(cfg), n);
  }
  if (spec == "random") {
    return fl::gen_uniform_random(example_shape_from(cfg), n, rng);
  }
  // a file: IDX or FLT1, detected by magic
  std::ifstream probe(spec, std::ios::binary);
  if (!probe) throw fl::IoError("cannot open dataset " + spec);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (magic[0] == 'F' && magic[1] == 'L' && magic[2] == 'T' && magic[3] == '1') {
    fl::Dataset ds;
    ds.data = fl::load_tensor(spec);
    ds.provenance = spec;
    ds.scaled = looks_scaled(ds.data);
    return ds;
  }
  return fl::load_idx(spec);
}

fl::ModelConfig model_config_from(const KvConfig& cfg, const fl::Shape& input_shape) {
  fl::ModelConfig mc;
  mc.variant = fl::variant_from_name(cfg.get("variant", "cv"));
  mc.input_shape = input_shape;
  mc.blocks = cfg.get_size("blocks", 1);
  mc.couplings = cfg.get_size("couplings", 4);
  mc.hidden = cfg.get_size("hidden", 32);
  const bool default_conv = mc.variant == fl::ModelConfig::Variant::CV;
  mc.use_invconv = cfg.get_bool("use_invconv", default_conv);
  mc.multiscale = cfg.get_bool("multiscale", false);
  mc.clamp_scale = cfg.get_bool("clamp_scale", true);
  mc.scale_clamp = cfg.get_double("scale_clamp", 5.0);
  return mc;
}

fl::Prior prior_from(const KvConfig& cfg) {
  return fl::make_prior(cfg.get("prior", "gaussian"), cfg.get_double("sigma_psi", 1.0));
}

fl::TrainConfig train_config_from(const KvConfig& cfg, bool image_run) {
  fl::TrainConfig tc;
  tc.lr = cfg.get_double("lr", 1e-5);
  tc.total_steps = cfg.get_size("steps", 1000);
  tc.batch = cfg.get_size("batch", 32);
  tc.l2 = cfg.get_double("lambda", image_run ? 5e-2 : 0.0);
  tc.seed = cfg.get_size("seed", 0);
  tc.eval_every = cfg.get_size("eval_every", 250);
  tc.eval_fraction = cfg.get_double("eval_fraction", 0.1);
  tc.clip_norm = cfg.get_double("clip_norm", 100.0);
  return tc;
}

fl::Tensor eval_ready(const fl::Dataset& ds) {
  // raw pixels get the example-keyed evaluation noise; scaled data pass through
  return ds.scaled ? ds.data : fl::dequantize_fixed(ds.data);
}

std::vector<std::size_t> parse_dims_list(const std::string& text) {
  std::vector<std::size_t> dims;
  std::istringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) dims.push_back(std::stoull(part));
  }
  if (dims.empty()) throw fl::InvalidConfig("--dims needs a comma-separated list, e.g. 2,8,32");
  return dims;
}

// ---------------------------------------------------------------------------
// subcommand bodies

int cmd_train(const KvConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.get_size("seed", 0);
  fl::Rng rng(seed);
  const std::string dataset_spec = cfg.get("dataset", "two-moons");
  fl::Dataset data = resolve_dataset(cfg, dataset_spec, rng);
  const bool image_run = data.data.example_shape().size() == 3;

  fl::ModelConfig mc = model_config_from(cfg, data.data.example_shape());
  fl::Rng init = rng.child(1);
  fl::FlowModel model = fl::build_model(mc, init);

  fl::TrainConfig tc = train_config_from(cfg, image_run && !data.scaled);
  tc.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  const fl::TrainResult result = fl::train(model, prior_from(cfg), data, tc);

  const std::string ckpt = (fs::path(out_dir) / "checkpoint.flw").string();
  fl::checkpoint_save(ckpt, model, mc, &result.optimizer);
  write_manifest(out_dir, "train", cfg, seed, {dataset_spec}, {ckpt, tc.metrics_path});
  std::cout << "trained " << fl::variant_name(mc.variant) << " model (" << model.param_size()
            << " parameters, " << tc.total_steps << " steps) -> " << ckpt << "\n";
  return 0;
}

int cmd_eval(const KvConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.get_size("seed", 0);
  const std::string ckpt_path = cfg.get("checkpoint", "");
  if (ckpt_path.empty()) throw fl::InvalidConfig("eval needs --checkpoint");
  const std::string dataset_spec = cfg.get("dataset", "");
  if (dataset_spec.empty()) throw fl::InvalidConfig("eval needs --dataset");

  fl::LoadedCheckpoint loaded = fl::checkpoint_load(ckpt_path);
  fl::Rng rng(seed);
  fl::Dataset data = resolve_dataset(cfg, dataset_spec, rng);
  const fl::Tensor x = eval_ready(data);
  const auto rows = fl::log_likelihood(loaded.model, prior_from(cfg), x);

  const std::string breakdown_path = (fs::path(out_dir) / "breakdowns.csv").string();
  fl::write_breakdown_csv(breakdown_path, rows);

  const std::size_t bins = cfg.get_size("bins", 80);
  std::vector<double> totals, priors, volumes;
  for (const auto& r : rows) {
    totals.push_back(r.total);
    priors.push_back(r.prior_term);
    volumes.push_back(r.volume_term);
  }
  const std::string hist_total = (fs::path(out_dir) / "hist_total.csv").string();
  const std::string hist_prior = (fs::path(out_dir) / "hist_prior.csv").string();
  const std::string hist_volume = (fs::path(out_dir) / "hist_volume.csv").string();
  fl::write_histogram_csv(hist_total, totals, bins);
  fl::write_histogram_csv(hist_prior, priors, bins);
  fl::write_histogram_csv(hist_volume, volumes, bins);

  double mean_total = 0.0;
  for (double t : totals) mean_total += t;
  mean_total /= static_cast<double>(totals.size());
  std::cout << "evaluated " << rows.size() << " examples: mean total " << mean_total << " nats, mean bpd "
            << fl::bpd_from_nats(mean_total, loaded.model.dim()) << "\n";
  write_manifest(out_dir, "eval", cfg, seed, {ckpt_path, dataset_spec},
                 {breakdown_path, hist_total, hist_prior, hist_volume});
  return 0;
}

int cmd_predict_gap(const KvConfig& cfg, const std::string& out_dir) {
  const std::string ckpt_path = cfg.get("checkpoint", "");
  if (ckpt_path.empty()) throw fl::InvalidConfig("predict-gap needs --checkpoint");
  const std::string q_path = cfg.get("moments_q", "");
  const std::string p_path = cfg.get("moments_p", "");
  if (q_path.empty() || p_path.empty()) {
    throw fl::InvalidConfig("predict-gap needs --moments-q and --moments-p");
  }
  fl::LoadedCheckpoint loaded = fl::checkpoint_load(ckpt_path);
  const fl::AlphaCoefficients alphas = fl::alpha_coeffs(loaded.model);
  const fl::DataMoments mq = fl::load_moments_json(q_path);
  const fl::DataMoments mp = fl::load_moments_json(p_path);
  const double sigma_psi = cfg.get_double("sigma_psi", 1.0);
  const fl::GapPrediction gap = fl::predict_gap_cv(alphas, mq, mp, sigma_psi);

  const std::string gap_path = (fs::path(out_dir) / "gap.json").string();
  fl::write_json(gap_path, fl::gap_to_json(gap));
  std::cout << "predicted gap E_q[log p] - E_p[log p] = " << gap.total << " nats\n";
  write_manifest(out_dir, "predict-gap", cfg, cfg.get_size("seed", 0), {ckpt_path, q_path, p_path},
                 {gap_path});
  return 0;
}

int cmd_simulate_bounds(const KvConfig& cfg, const std::string& out_dir) {
  const std::vector<std::size_t> dims = parse_dims_list(cfg.get("dims_list", "2,8,32,64"));
  const std::string variant = cfg.get("variant", "nvp-exp");
  fl::ScaleParam sp;
  if (variant == "nvp-exp") {
    sp = fl::ScaleParam::Exp;
  } else if (variant == "nvp-sigmoid") {
    sp = fl::ScaleParam::Sigmoid;
  } else {
    throw fl::InvalidConfig("simulate-bounds variant must be nvp-exp or nvp-sigmoid");
  }
  fl::SweepConfig sc;
  sc.n_train = cfg.get_size("n", 2048);
  sc.n_eval = cfg.get_size("n_eval", 256);
  sc.noise = cfg.get_double("noise", 0.1);
  sc.couplings = cfg.get_size("couplings", 4);
  sc.hidden = cfg.get_size("hidden", 24);
  sc.steps = cfg.get_size("steps", 800);
  sc.lr = cfg.get_double("lr", 1e-3);
  sc.batch = cfg.get_size("batch", 128);
  sc.seed = cfg.get_size("seed", 7);

  const auto rows = fl::simulate_bounds(dims, sp, sc);
  const std::string sweep_path = (fs::path(out_dir) / "sweep.csv").string();
  fl::write_sweep_csv(sweep_path, rows);
  nlohmann::ordered_json reports = nlohmann::ordered_json::array();
  for (const auto& r : rows) reports.push_back(fl::bound_report_to_json(r.peak_bound));
  const std::string bounds_path = (fs::path(out_dir) / "bounds.json").string();
  fl::write_json(bounds_path, reports);
  for (const auto& r : rows) {
    std::cout << "D=" << r.dim << " mean prior " << r.mean_prior << " mean volume " << r.mean_volume
              << (sp == fl::ScaleParam::Sigmoid ? (r.max_volume <= 0.0 ? " (volume <= 0)" : " (!)") : "")
              << "\n";
  }
  write_manifest(out_dir, "simulate-bounds", cfg, sc.seed, {}, {sweep_path, bounds_path});
  return 0;
}

int cmd_stats(const KvConfig& cfg, const std::string& out_dir) {
  const std::uint64_t seed = cfg.get_size("seed", 0);
  const std::string dataset_spec = cfg.get("dataset", "");
  if (dataset_spec.empty()) throw fl::InvalidConfig("stats needs --dataset");
  fl::Rng rng(seed);
  fl::Dataset data = resolve_dataset(cfg, dataset_spec, rng);
  // raw pixels are put on the [0,1) scale (exact division, no noise)
  const fl::Dataset& scaled = data.scaled ? data : (data = fl::scale_pixels(data), data);
  const fl::DataMoments moments = fl::compute_moments(scaled.data);
  const std::string moments_path = (fs::path(out_dir) / "moments.json").string();
  fl::write_json(moments_path, fl::moments_to_json(moments));
  std::cout << "moments over " << moments.count << " examples; channel variance sums:";
  for (double s : moments.channel_var_sums) std::cout << " " << s;
  std::cout << "\n";
  write_manifest(out_dir, "stats", cfg, seed, {dataset_spec}, {moments_path});
  return 0;
}

int cmd_sample(const KvConfig& cfg, const std::string& out_dir) {
  const std::string ckpt_path = cfg.get("checkpoint", "");
  if (ckpt_path.empty()) throw fl::InvalidConfig("sample needs --checkpoint");
  const std::uint64_t seed = cfg.get_size("seed", 0);
  const std::size_t n = cfg.get_size("n", 64);
  fl::LoadedCheckpoint loaded = fl::checkpoint_load(ckpt_path);
  const fl::Prior prior = prior_from(cfg);
  fl::Rng rng(seed);
  fl::Tensor z({n, loaded.model.dim()});
  prior.sample(rng, z.flat());
  const fl::Tensor x = loaded.model.inverse(z);
  const std::string samples_path = (fs::path(out_dir) / "samples.flt").string();
  fl::save_tensor(samples_path, x);
  std::cout << "wrote " << n << " samples -> " << samples_path << "\n";
  write_manifest(out_dir, "sample", cfg, seed, {ckpt_path}, {samples_path});
  return 0;
}

int cmd_checks(const KvConfig& cfg, const std::string& out_dir) {
  const std::string ckpt_path = cfg.get("checkpoint", "");
  if (ckpt_path.empty()) throw fl::InvalidConfig("checks needs --checkpoint");
  const std::uint64_t seed = cfg.get_size("seed", 0);
  fl::LoadedCheckpoint loaded = fl::checkpoint_load(ckpt_path);
  const fl::FlowModel& model = loaded.model;
  const fl::Prior prior = prior_from(cfg);
  fl::Rng rng(seed);

  // Probe points: dataset examples when given, else model samples.
  fl::Tensor points;
  const std::string dataset_spec = cfg.get("dataset", "");
  if (!dataset_spec.empty()) {
    fl::Dataset data = resolve_dataset(cfg, dataset_spec, rng);
    fl::Tensor ready = eval_ready(data);
    const std::size_t keep = std::min<std::size_t>(ready.batch(), 64);
    points = fl::Tensor({keep, model.dim()});
    std::copy(ready.data(), ready.data() + keep * model.dim(), points.data());
  } else {
    const std::size_t keep = 64;
    fl::Tensor z({keep, model.dim()});
    prior.sample(rng, z.flat());
    points = model.inverse(z);
    points = fl::Tensor({keep, model.dim()}, std::vector<double>(points.data(), points.data() + points.size()));
  }

  std::vector<fl::BoundReport> reports;
  reports.push_back(fl::hadamard_check(model, points));

  if (model.constant_volume()) {
    std::vector<double> x0(model.dim(), 0.0);
    for (std::size_t i = 0; i < points.batch(); ++i) {
      const auto ex = points.example(i);
      for (std::size_t j = 0; j < ex.size(); ++j) x0[j] += ex[j];
    }
    for (double& v : x0) v /= static_cast<double>(points.batch());
    const auto hessian = fl::hessian_check_cv(model, prior, x0);
    reports.insert(reports.end(), hessian.begin(), hessian.end());
  }

  // Concentration check around the probe mean with a sampled Lipschitz
  // estimate (per-point column-norm bound, widened by sqrt(D) and a margin).
  {
    const std::size_t d = model.dim();
    const fl::DataMoments pm = fl::compute_moments(points);
    fl::SampleSpec spec;
    spec.mean = pm.mean;
    spec.total_variance = 0.0;
    for (double v : pm.variance) spec.total_variance += v;
    std::vector<double> stddev(d);
    for (std::size_t j = 0; j < d; ++j) stddev[j] = std::sqrt(pm.variance[j]);
    const std::vector<double> mean = pm.mean;
    spec.draw = [mean, stddev](fl::Rng& r) {
      std::vector<double> x(mean.size());
      for (std::size_t j = 0; j < x.size(); ++j) x[j] = mean[j] + stddev[j] * r.normal();
      return x;
    };
    const fl::VectorFn fwd = [&model](const std::vector<double>& v) {
      std::vector<double> z(v.size());
      double ld = 0.0;
      model.forward_one(v.data(), z.data(), ld, nullptr);
      return z;
    };
    double max_col = 0.0;
    const std::size_t probes = std::min<std::size_t>(points.batch(), 16);
    for (std::size_t i = 0; i < probes; ++i) {
      const auto ex = points.example(i);
      const fl::SquareMatrix jac =
          fl::finite_diff_jacobian(fwd, std::vector<double>(ex.begin(), ex.end()));
      for (std::size_t j = 0; j < d; ++j) {
        double norm2 = 0.0;
        for (std::size_t i2 = 0; i2 < d; ++i2) norm2 += jac(i2, j) * jac(i2, j);
        max_col = std::max(max_col, std::sqrt(norm2));
      }
    }
    const double l_hat = max_col * std::sqrt(static_cast<double>(d)) * 1.5;
    const double sigma_x = std::sqrt(spec.total_variance);
    fl::Rng crng = rng.child(2);
    auto conc = fl::concentration_check(fwd, l_hat, spec,
                                        {1.0 * l_hat * sigma_x, 2.0 * l_hat * sigma_x,
                                         4.0 * l_hat * sigma_x},
                                        4000, crng);
    for (auto& r : conc) r.note += "; Lipschitz constant is a sampled estimate";
    reports.insert(reports.end(), conc.begin(), conc.end());
  }

  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  bool all_ok = true;
  for (const auto& r : reports) {
    out.push_back(fl::bound_report_to_json(r));
    all_ok = all_ok && r.satisfied;
    std::cout << (r.satisfied ? "[ok]   " : "[FAIL] ") << r.name << " lhs=" << r.lhs
              << " rhs=" << r.rhs << "\n";
  }
  const std::string checks_path = (fs::path(out_dir) / "checks.json").string();
  fl::write_json(checks_path, out);
  write_manifest(out_dir, "checks", cfg, seed, {ckpt_path}, {checks_path});
  return all_ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"normalizing-flow density estimation and OOD likelihood analysis"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", checkpoint, dataset, variant, moments_q, moments_p, dims_list;
  double sigma_psi = -1.0, lambda = -1.0;
  std::int64_t seed = -1, n = -1, steps = -1;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "flat key=value config file");
    sub->add_option("--seed", seed, "rng seed");
    sub->add_option("--out-dir", out_dir, "output directory (default .)");
    sub->add_option("--sigma-psi", sigma_psi, "latent standard deviation");
  };

  CLI::App* train = app.add_subcommand("train", "train a flow model");
  add_common(train);
  train->add_option("--dataset", dataset, "two-moons | cv-gaussian | constant | random | <file>");
  train->add_option("--variant", variant, "nvp-exp | nvp-sigmoid | cv");
  train->add_option("--lambda", lambda, "L2 coefficient");
  train->add_option("--steps", steps, "training steps");
  train->add_option("--dims", dims_list, "flat dimensionality");

  CLI::App* eval = app.add_subcommand("eval", "per-example likelihood breakdowns");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--dataset", dataset, "dataset to evaluate")->required();

  CLI::App* gap = app.add_subcommand("predict-gap", "closed-form CV likelihood gap");
  add_common(gap);
  gap->add_option("--checkpoint", checkpoint, "CV model checkpoint")->required();
  gap->add_option("--moments-q", moments_q, "moments JSON for distribution q")->required();
  gap->add_option("--moments-p", moments_p, "moments JSON for the training distribution")->required();

  CLI::App* bounds = app.add_subcommand("simulate-bounds", "dimensionality sweep of both terms");
  add_common(bounds);
  bounds->add_option("--dims", dims_list, "comma-separated dimensionalities, e.g. 2,8,32,64");
  bounds->add_option("--variant", variant, "nvp-exp | nvp-sigmoid");
  bounds->add_option("--steps", steps, "training steps per dimensionality");

  CLI::App* stats = app.add_subcommand("stats", "per-dimension moments of a dataset");
  add_common(stats);
  stats->add_option("--dataset", dataset, "dataset to summarize")->required();
  stats->add_option("--dims", dims_list, "flat dimensionality for synthetic datasets");

  CLI::App* sample = app.add_subcommand("sample", "draw samples through the inverse transform");
  add_common(sample);
  sample->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  sample->add_option("--n", n, "number of samples");

  CLI::App* checks = app.add_subcommand("checks", "hadamard / concentration / curvature checks");
  add_common(checks);
  checks->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  checks->add_option("--dataset", dataset, "probe points (default: model samples)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    KvConfig cfg = load_kv_file(config_path);
    // flags override file values
    if (seed >= 0) cfg.set("seed", std::to_string(seed));
    if (!checkpoint.empty()) cfg.set("checkpoint", checkpoint);
    if (!dataset.empty()) cfg.set("dataset", dataset);
    if (!variant.empty()) cfg.set("variant", variant);
    if (!moments_q.empty()) cfg.set("moments_q", moments_q);
    if (!moments_p.empty()) cfg.set("moments_p", moments_p);
    if (sigma_psi > 0.0) cfg.set("sigma_psi", format_double(sigma_psi));
    if (lambda >= 0.0) cfg.set("lambda", format_double(lambda));
    if (n >= 0) cfg.set("n", std::to_string(n));
    if (steps >= 0) cfg.set("steps", std::to_string(steps));
    if (!dims_list.empty()) {
      cfg.set("dims_list", dims_list);
      if (dims_list.find(',') == std::string::npos) cfg.set("dims", dims_list);
    }

    fs::create_directories(out_dir);
    if (app.got_subcommand("train")) return cmd_train(cfg, out_dir);
    if (app.got_subcommand("eval")) return cmd_eval(cfg, out_dir);
    if (app.got_subcommand("predict-gap")) return cmd_predict_gap(cfg, out_dir);
    if (app.got_subcommand("simulate-bounds")) return cmd_simulate_bounds(cfg, out_dir);
    if (app.got_subcommand("stats")) return cmd_stats(cfg, out_dir);
    if (app.got_subcommand("sample")) return cmd_sample(cfg, out_dir);
    if (app.got_subcommand("checks")) return cmd_checks(cfg, out_dir);
    return kExitUsage;
  } catch (const fl::SingularMatrix& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fl::NonFiniteLoss& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fl::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fl::BadMagic& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fl::TruncatedFile& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fl::CorruptCheckpoint& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fl::VersionMismatch& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
