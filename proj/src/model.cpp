#include "flowlab/model.hpp"

#include <map>
#include <sstream>

#include "flowlab/errors.hpp"

namespace flowlab {

// ---------------------------------------------------------------------------
// ModelConfig text form (also embedded in checkpoints)

const char* variant_name(ModelConfig::Variant v) {
  switch (v) {
    case ModelConfig::Variant::CV:
      return "cv";
    case ModelConfig::Variant::NvpExp:
      return "nvp-exp";
    case ModelConfig::Variant::NvpSigmoid:
      return "nvp-sigmoid";
  }
  return "?";
}

ModelConfig::Variant variant_from_name(const std::string& name) {
  if (name == "cv") return ModelConfig::Variant::CV;
  if (name == "nvp-exp") return ModelConfig::Variant::NvpExp;
  if (name == "nvp-sigmoid") return ModelConfig::Variant::NvpSigmoid;
  throw InvalidConfig("unknown variant: " + name + " (expected nvp-exp|nvp-sigmoid|cv)");
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  out << "variant=" << variant_name(variant) << "\n";
  out << "input=";
  for (std::size_t i = 0; i < input_shape.size(); ++i) {
    if (i) out << "x";
    out << input_shape[i];
  }
  out << "\n";
  out << "blocks=" << blocks << "\n";
  out << "couplings=" << couplings << "\n";
  out << "hidden=" << hidden << "\n";
  out << "use_invconv=" << (use_invconv ? 1 : 0) << "\n";
  out << "multiscale=" << (multiscale ? 1 : 0) << "\n";
  out << "clamp_scale=" << (clamp_scale ? 1 : 0) << "\n";
  out << "scale_clamp=" << scale_clamp << "\n";
  return out.str();
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  ModelConfig cfg;
  const auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw InvalidConfig(std::string("model config missing key: ") + key);
    return it->second;
  };
  cfg.variant = variant_from_name(need("variant"));
  {
    std::istringstream shape_in(need("input"));
    std::string part;
    cfg.input_shape.clear();
    while (std::getline(shape_in, part, 'x')) cfg.input_shape.push_back(std::stoull(part));
  }
  cfg.blocks = std::stoull(need("blocks"));
  cfg.couplings = std::stoull(need("couplings"));
  cfg.hidden = std::stoull(need("hidden"));
  cfg.use_invconv = need("use_invconv") != "0";
  cfg.multiscale = need("multiscale") != "0";
  cfg.clamp_scale = need("clamp_scale") != "0";
  cfg.scale_clamp = std::stod(need("scale_clamp"));
  return cfg;
}

// ---------------------------------------------------------------------------
// FlowModel

FlowModel::FlowModel(Shape input_shape, std::vector<std::unique_ptr<FlowLayer>> layers)
    : input_shape_(std::move(input_shape)), layers_(std::move(layers)) {
  dim_ = shape_numel(input_shape_);
  if (dim_ == 0) throw InvalidConfig("model input shape is empty");

  Shape cur = input_shape_;
  std::size_t z_cursor = 0;
  param_offsets_.resize(layers_.size(), 0);
  factor_offsets_.assign(layers_.size(), 0);
  max_width_ = dim_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    FlowLayer& l = *layers_[i];
    if (l.in_shape() != cur) {
      throw InvalidConfig("layer " + std::to_string(i) + " (" + l.kind() + ") expects " +
                          shape_to_string(l.in_shape()) + " but the running shape is " +
                          shape_to_string(cur));
    }
    param_offsets_[i] = param_size_;
    param_size_ += l.param_size();
    if (l.factored_size() > 0) {
      const auto& fo = static_cast<const FactorOutLayer&>(l);
      factor_shapes_.push_back(fo.factored_shape());
      factor_offsets_[i] = z_cursor;
      z_cursor += l.factored_size();
    }
    cur = l.out_shape();
    max_width_ = std::max(max_width_, shape_numel(cur));
  }
  final_offset_ = z_cursor;
  final_size_ = shape_numel(cur);
  if (final_offset_ + final_size_ != dim_) {
    throw InvalidConfig("latent dimensionality does not match the input dimensionality");
  }
}

void FlowModel::gather_params(std::vector<double>& out) const {
  out.resize(param_size_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const double* p = layers_[i]->param_data();
    for (std::size_t k = 0; k < layers_[i]->param_size(); ++k) out[param_offsets_[i] + k] = p[k];
  }
}

void FlowModel::scatter_params(std::span<const double> params) {
  if (params.size() != param_size_) throw ShapeMismatch("parameter vector length mismatch");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    double* p = layers_[i]->param_data();
    for (std::size_t k = 0; k < layers_[i]->param_size(); ++k) p[k] = params[param_offsets_[i] + k];
  }
  refresh();
}

void FlowModel::init_params(Rng& rng) {
  for (auto& l : layers_) l->init_params(rng);
  refresh();
}

void FlowModel::refresh() {
  for (auto& l : layers_) l->refresh();
}

bool FlowModel::constant_volume() const {
  for (const auto& l : layers_) {
    if (!l->constant_volume()) return false;
  }
  return true;
}

void FlowModel::forward_one(const double* x, double* z, double& logdet, std::vector<LayerCache>* cache,
                            std::vector<double>* per_layer_logdet) const {
  std::vector<double> buf_a(max_width_), buf_b(max_width_);
  double* cur = buf_a.data();
  double* nxt = buf_b.data();
  std::copy(x, x + dim_, cur);
  logdet = 0.0;
  if (cache) cache->resize(layers_.size());
  if (per_layer_logdet) per_layer_logdet->assign(layers_.size(), 0.0);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const FlowLayer& l = *layers_[i];
    double ld = 0.0;
    double* factored = l.factored_size() > 0 ? z + factor_offsets_[i] : nullptr;
    l.fwd(cur, nxt, factored, ld, cache ? &(*cache)[i] : nullptr);
    logdet += ld;
    if (per_layer_logdet) (*per_layer_logdet)[i] = ld;
    std::swap(cur, nxt);
  }
  std::copy(cur, cur + final_size_, z + final_offset_);
}

void FlowModel::inverse_one(const double* z, double* x) const {
  std::vector<double> buf_a(max_width_), buf_b(max_width_);
  double* cur = buf_a.data();
  double* nxt = buf_b.data();
  std::copy(z + final_offset_, z + final_offset_ + final_size_, cur);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const FlowLayer& l = *layers_[i];
    const double* factored = l.factored_size() > 0 ? z + factor_offsets_[i] : nullptr;
    l.inv(cur, factored, nxt);
    std::swap(cur, nxt);
  }
  std::copy(cur, cur + dim_, x);
}

void FlowModel::backward_one(const std::vector<LayerCache>& cache, const double* dz, double dlogdet,
                             double* dx, double* dparams) const {
  std::vector<double> buf_a(max_width_), buf_b(max_width_);
  double* cur = buf_a.data();
  double* nxt = buf_b.data();
  std::copy(dz + final_offset_, dz + final_offset_ + final_size_, cur);
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const FlowLayer& l = *layers_[i];
    const double* dfactored = l.factored_size() > 0 ? dz + factor_offsets_[i] : nullptr;
    l.bwd(cache[i], cur, dfactored, dlogdet, nxt, dparams ? dparams + param_offsets_[i] : nullptr);
    std::swap(cur, nxt);
  }
  if (dx) std::copy(cur, cur + dim_, dx);
}

void FlowModel::check_example_shape(const Tensor& t) const {
  if (t.example_size() != dim_) {
    throw ShapeMismatch("batch example size does not match model dimensionality");
  }
  const Shape es = t.example_shape();
  const bool flat_match = es.size() == 1 && es[0] == dim_;
  if (es != input_shape_ && !flat_match) {
    throw ShapeMismatch("batch example shape " + shape_to_string(es) +
                        " does not match model input " + shape_to_string(input_shape_));
  }
}

FlowModel::ForwardResult FlowModel::forward(const Tensor& x, par::Exec mode) const {
  check_example_shape(x);
  const std::size_t n = x.batch();
  ForwardResult result;
  result.z = Tensor({n, dim_});
  result.logdet.assign(n, 0.0);
  result.per_layer.assign(layers_.size(), std::vector<double>(n, 0.0));
  par::for_each(n, mode, [&](std::size_t i) {
    std::vector<double> per_layer;
    forward_one(x.example(i).data(), result.z.example(i).data(), result.logdet[i], nullptr, &per_layer);
    for (std::size_t l = 0; l < layers_.size(); ++l) result.per_layer[l][i] = per_layer[l];
  });
  return result;
}

Tensor FlowModel::inverse(const Tensor& z, par::Exec mode) const {
  if (z.example_size() != dim_) {
    throw ShapeMismatch("latent example size does not match model dimensionality");
  }
  const std::size_t n = z.batch();
  Shape out = input_shape_;
  out.insert(out.begin(), n);
  Tensor x(out);
  par::for_each(n, mode, [&](std::size_t i) { inverse_one(z.example(i).data(), x.example(i).data()); });
  return x;
}

// ---------------------------------------------------------------------------
// build_model

FlowModel build_model(const ModelConfig& config, Rng& rng) {
  if (config.input_shape.size() != 1 && config.input_shape.size() != 3) {
    throw InvalidConfig("input shape must be {D} or {H,W,C}");
  }
  if (config.blocks == 0 || config.couplings == 0) {
    throw InvalidConfig("blocks and couplings must be positive");
  }
  if (config.hidden == 0) throw InvalidConfig("hidden width must be positive");

  const bool image = config.input_shape.size() == 3;
  std::vector<std::unique_ptr<FlowLayer>> layers;
  Shape cur = config.input_shape;

  const auto add_squeeze = [&]() {
    auto sq = PermutationLayer::squeeze(cur);
    cur = sq->out_shape();
    layers.push_back(std::move(sq));
  };

  // Odd channel counts cannot split; squeeze up front so C >= 4.
  if (image && cur[2] % 2 != 0) add_squeeze();

  CouplingLayer::Options copts;
  copts.hidden = config.hidden;
  copts.clamp_scale = config.clamp_scale;
  copts.scale_clamp = config.scale_clamp;
  switch (config.variant) {
    case ModelConfig::Variant::CV:
      copts.kind = CouplingLayer::Kind::Additive;
      break;
    case ModelConfig::Variant::NvpExp:
      copts.kind = CouplingLayer::Kind::Affine;
      copts.scale_param = ScaleParam::Exp;
      break;
    case ModelConfig::Variant::NvpSigmoid:
      copts.kind = CouplingLayer::Kind::Affine;
      copts.scale_param = ScaleParam::Sigmoid;
      break;
  }

  for (std::size_t b = 0; b < config.blocks; ++b) {
    if (b > 0 && image) add_squeeze();
    for (std::size_t s = 0; s < config.couplings; ++s) {
      layers.push_back(std::make_unique<CouplingLayer>(cur, copts));
      if (config.use_invconv) {
        layers.push_back(std::make_unique<InvConv1x1>(cur));
      } else {
        layers.push_back(PermutationLayer::swap_halves(cur));
      }
    }
    if (config.multiscale && b + 1 < config.blocks) {
      auto fo = std::make_unique<FactorOutLayer>(cur);
      cur = fo->out_shape();
      layers.push_back(std::move(fo));
    }
  }

  FlowModel model(config.input_shape, std::move(layers));
  model.init_params(rng);
  return model;
}

}  // namespace flowlab
