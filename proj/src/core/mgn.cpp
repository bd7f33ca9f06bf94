#include "core/mgn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "json.hpp"

#include "core/io.hpp"
#include "core/rng.hpp"

namespace cisskip {

namespace {

constexpr double kLnEps = 1e-5;    // layer-norm epsilon
constexpr double kBceClamp = 1e-7; // score clamp for the BCE log terms

Matrix affine_forward(const Matrix& x, const Affine& a) {
  return add_row_broadcast(matmul(x, a.w), a.b);
}

}  // namespace

void MgnConfig::validate() const {
  if (input_h < 1 || input_w < 1 || channels < 1) throw ConfigError("mgn: bad input dims");
  if (patch < 1 || input_h % patch != 0 || input_w % patch != 0) {
    throw ConfigError("mgn: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                      " not divisible by patch " + std::to_string(patch));
  }
  if (heads < 1 || embed_dim < 1 || embed_dim % heads != 0) {
    throw ConfigError("mgn: embed dim " + std::to_string(embed_dim) +
                      " not divisible by heads " + std::to_string(heads));
  }
  if (ffn_dim < 1) throw ConfigError("mgn: ffn dim must be positive");
}

std::vector<std::pair<std::string, Matrix*>> MgnWeights::tensors() {
  return {
      {"patch_embed.weight", &patch_embed.w},
      {"patch_embed.bias", &patch_embed.b},
      {"cls_token", &cls_token},
      {"pos_embed", &pos_embed},
      {"block.ln1.gamma", &ln1.gamma},
      {"block.ln1.beta", &ln1.beta},
      {"block.qkv.weight", &qkv.w},
      {"block.qkv.bias", &qkv.b},
      {"block.proj.weight", &attn_proj.w},
      {"block.proj.bias", &attn_proj.b},
      {"block.ln2.gamma", &ln2.gamma},
      {"block.ln2.beta", &ln2.beta},
      {"block.fc1.weight", &ffn_fc1.w},
      {"block.fc1.bias", &ffn_fc1.b},
      {"block.fc2.weight", &ffn_fc2.w},
      {"block.fc2.bias", &ffn_fc2.b},
      {"extra.ln.gamma", &extra.ln.gamma},
      {"extra.ln.beta", &extra.ln.beta},
      {"extra.qkv.weight", &extra.qkv.w},
      {"extra.qkv.bias", &extra.qkv.b},
      {"extra.proj.weight", &extra.proj.w},
      {"extra.proj.bias", &extra.proj.b},
      {"head.weight", &head.w},
      {"head.bias", &head.b},
  };
}

std::vector<std::pair<std::string, const Matrix*>> MgnWeights::tensors() const {
  auto mut = const_cast<MgnWeights*>(this)->tensors();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mut.size());
  for (auto& [name, m] : mut) out.emplace_back(name, m);
  return out;
}

MgnWeights MgnWeights::zeros(const MgnConfig& config) {
  config.validate();
  const int L = config.embed_dim;
  const int N = config.n_patches();
  MgnWeights w;
  w.config = config;
  w.patch_embed = {Matrix(config.patch_len(), L), Matrix(1, L)};
  w.cls_token = Matrix(1, L);
  w.pos_embed = Matrix(config.tokens(), L);
  w.ln1 = {Matrix(1, L), Matrix(1, L)};
  w.qkv = {Matrix(L, 3 * L), Matrix(1, 3 * L)};
  w.attn_proj = {Matrix(L, L), Matrix(1, L)};
  w.ln2 = {Matrix(1, L), Matrix(1, L)};
  w.ffn_fc1 = {Matrix(L, config.ffn_dim), Matrix(1, config.ffn_dim)};
  w.ffn_fc2 = {Matrix(config.ffn_dim, L), Matrix(1, L)};
  w.extra.ln = {Matrix(1, L), Matrix(1, L)};
  w.extra.qkv = {Matrix(L, 3 * L), Matrix(1, 3 * L)};
  w.extra.proj = {Matrix(L, L), Matrix(1, L)};
  w.head = {Matrix(N, N), Matrix(1, N)};
  return w;
}

MgnWeights init_weights(const MgnConfig& config, uint64_t seed) {
  MgnWeights w = MgnWeights::zeros(config);
  Rng rng(seed);
  constexpr double sigma = 0.02;
  for (auto& [name, tensor] : w.tensors()) {
    bool is_weight = name.ends_with(".weight");
    bool is_gamma = name.ends_with(".gamma");
    bool is_embed = name == "cls_token" || name == "pos_embed";
    if (is_weight) {
      for (double& v : tensor->values()) v = rng.truncated_normal(sigma);
    } else if (is_embed) {
      for (double& v : tensor->values()) v = rng.normal(sigma);
    } else if (is_gamma) {
      for (double& v : tensor->values()) v = 1.0;
    }
    // biases and betas stay zero
  }
  return w;
}

int64_t count_params(const MgnConfig& config) {
  MgnWeights w = MgnWeights::zeros(config);
  int64_t n = 0;
  for (auto& [name, tensor] : w.tensors()) n += static_cast<int64_t>(tensor->size());
  return n;
}

int64_t estimate_flops(const MgnConfig& config) {
  config.validate();
  const int64_t N = config.n_patches();
  const int64_t M = config.tokens();
  const int64_t L = config.embed_dim;
  const int64_t H = config.heads;
  const int64_t d = config.head_dim();
  const int64_t F = config.ffn_dim;
  int64_t macs = 0;
  macs += N * config.patch_len() * L;      // patch embedding
  macs += M * L * 3 * L;                   // block qkv
  macs += 2 * H * M * M * d;               // block attention logits + attn*V
  macs += M * L * L;                       // block projection
  macs += M * L * F + M * F * L;           // ffn
  macs += M * L * 3 * L;                   // extra qkv
  macs += 2 * H * M * M * d;               // extra logits + attn*V
  macs += M * L * L;                       // extra projection
  macs += N * N;                           // scoring head
  return 2 * macs;
}

Matrix patchify(const std::vector<Matrix>& channels, const MgnConfig& config) {
  config.validate();
  if (channels.size() != static_cast<size_t>(config.channels)) {
    throw ShapeError("patchify: got " + std::to_string(channels.size()) + " channels, config has " +
                     std::to_string(config.channels));
  }
  for (const Matrix& ch : channels) {
    if (ch.rows() != config.input_h || ch.cols() != config.input_w) {
      throw ShapeError("patchify: channel " + ch.shape_str() + " does not match input " +
                       std::to_string(config.input_h) + "x" + std::to_string(config.input_w));
    }
  }
  const int p = config.patch;
  Matrix out(config.n_patches(), config.patch_len());
  for (int k = 0; k < config.n_patches(); ++k) {
    const int pr = k / config.grid_w();
    const int pc = k % config.grid_w();
    int idx = 0;
    for (int c = 0; c < config.channels; ++c) {
      for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
          out(k, idx++) = channels[c](pr * p + i, pc * p + j);
        }
      }
    }
  }
  return out;
}

std::vector<Matrix> unpatchify(const Matrix& patches, const MgnConfig& config) {
  if (patches.rows() != config.n_patches() || patches.cols() != config.patch_len()) {
    throw ShapeError("unpatchify: " + patches.shape_str() + " does not match config");
  }
  const int p = config.patch;
  std::vector<Matrix> channels(config.channels, Matrix(config.input_h, config.input_w));
  for (int k = 0; k < config.n_patches(); ++k) {
    const int pr = k / config.grid_w();
    const int pc = k % config.grid_w();
    int idx = 0;
    for (int c = 0; c < config.channels; ++c) {
      for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
          channels[c](pr * p + i, pc * p + j) = patches(k, idx++);
        }
      }
    }
  }
  return channels;
}

Matrix digital_to_matrix(const DigitalFrame& frame) {
  Matrix m(frame.rows, frame.cols);
  const double max_code = static_cast<double>((1 << frame.bit_depth) - 1);
  for (size_t i = 0; i < frame.codes.size(); ++i) m.values()[i] = frame.codes[i] / max_code;
  return m;
}

Matrix frame_to_matrix(const Frame& frame) {
  return Matrix(frame.rows, frame.cols, frame.px);
}

namespace {

// Per-head self-attention; logits may be kept pre-softmax for the scoring
// path.
struct AttentionComputation {
  Matrix qkv;                        // [M, 3L]
  std::vector<Matrix> logits;        // per head [M, M]
  std::vector<Matrix> softmax;       // per head [M, M]
  Matrix concat;                     // [M, L]
};

AttentionComputation attention_forward(const Matrix& x_norm, const Affine& qkv_layer,
                                       const MgnConfig& config) {
  AttentionComputation a;
  a.qkv = affine_forward(x_norm, qkv_layer);
  const int L = config.embed_dim;
  const int d = config.head_dim();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  a.concat = Matrix(x_norm.rows(), L);
  for (int h = 0; h < config.heads; ++h) {
    Matrix q = slice_cols(a.qkv, h * d, (h + 1) * d);
    Matrix k = slice_cols(a.qkv, L + h * d, L + (h + 1) * d);
    Matrix v = slice_cols(a.qkv, 2 * L + h * d, 2 * L + (h + 1) * d);
    Matrix logits = scale(matmul(q, transpose(k)), inv_sqrt_d);
    Matrix soft = softmax_rows(logits);
    assign_cols(a.concat, h * d, matmul(soft, v));
    a.logits.push_back(std::move(logits));
    a.softmax.push_back(std::move(soft));
  }
  return a;
}

}  // namespace

MgnOutput mgn_forward(const MgnWeights& weights, const std::vector<Matrix>& image,
                      MgnTrace* trace) {
  const MgnConfig& cfg = weights.config;
  cfg.validate();
  const int L = cfg.embed_dim;
  const int N = cfg.n_patches();
  const int M = cfg.tokens();

  MgnTrace local;
  MgnTrace& t = trace ? *trace : local;

  t.patches = patchify(image, cfg);
  Matrix embedded = affine_forward(t.patches, weights.patch_embed);
  embedded.require_finite("patch_embed");

  t.tokens = Matrix(M, L);
  for (int j = 0; j < L; ++j) t.tokens(0, j) = weights.cls_token(0, j);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < L; ++j) t.tokens(i + 1, j) = embedded(i, j);
  t.tokens = add(t.tokens, weights.pos_embed);

  // encoder block: LN -> MHSA -> residual, LN -> FFN -> residual
  t.ln1_out = layer_norm(t.tokens, weights.ln1.gamma, weights.ln1.beta, kLnEps, &t.ln1_cache);
  AttentionComputation block_attn = attention_forward(t.ln1_out, weights.qkv, cfg);
  t.qkv = std::move(block_attn.qkv);
  t.attn = std::move(block_attn.softmax);
  t.attn_concat = std::move(block_attn.concat);
  t.attn_proj = affine_forward(t.attn_concat, weights.attn_proj);
  t.attn_proj.require_finite("block.attention");
  t.res1 = add(t.tokens, t.attn_proj);

  t.ln2_out = layer_norm(t.res1, weights.ln2.gamma, weights.ln2.beta, kLnEps, &t.ln2_cache);
  t.ffn_pre = affine_forward(t.ln2_out, weights.ffn_fc1);
  t.ffn_act = gelu(t.ffn_pre);
  Matrix ffn_out = affine_forward(t.ffn_act, weights.ffn_fc2);
  ffn_out.require_finite("block.ffn");
  t.res2 = add(t.res1, ffn_out);

  // extra attention layer: its pre-softmax cls row is the patch importance
  t.ln3_out = layer_norm(t.res2, weights.extra.ln.gamma, weights.extra.ln.beta, kLnEps,
                         &t.ln3_cache);
  AttentionComputation extra_attn = attention_forward(t.ln3_out, weights.extra.qkv, cfg);
  t.qkv2 = std::move(extra_attn.qkv);
  t.attn2_logits = std::move(extra_attn.logits);
  t.extra_out = affine_forward(extra_attn.concat, weights.extra.proj);

  t.cls_attn = Matrix(1, N);
  for (int h = 0; h < cfg.heads; ++h) {
    const Matrix& logits = t.attn2_logits[h];
    for (int j = 0; j < N; ++j) t.cls_attn(0, j) += logits(0, j + 1);
  }
  t.cls_attn = scale(t.cls_attn, 1.0 / cfg.heads);
  t.cls_attn.require_finite("extra.cls_attention");

  t.score_logits = affine_forward(t.cls_attn, weights.head);
  t.score_logits.require_finite("head");

  t.scores = ScoreGrid(cfg.grid_h(), cfg.grid_w());
  for (int j = 0; j < N; ++j) t.scores.values[j] = sigmoid_scalar(t.score_logits(0, j));

  MgnOutput out;
  out.scores = t.scores;
  out.cls_attn.assign(t.cls_attn.values().begin(), t.cls_attn.values().end());
  return out;
}

double bce_loss(const ScoreGrid& scores, const BinaryGrid& labels) {
  if (scores.gh != labels.gh || scores.gw != labels.gw) {
    throw ShapeError("bce_loss: scores [" + std::to_string(scores.gh) + "x" +
                     std::to_string(scores.gw) + "] vs labels " + labels.shape_str());
  }
  double loss = 0.0;
  const size_t n = scores.values.size();
  for (size_t i = 0; i < n; ++i) {
    double s = std::clamp(scores.values[i], kBceClamp, 1.0 - kBceClamp);
    double y = labels.bits[i];
    loss -= y * std::log(s) + (1.0 - y) * std::log(1.0 - s);
  }
  return loss / static_cast<double>(n);
}

double mgn_loss_and_grad(const MgnWeights& weights, const std::vector<Matrix>& image,
                         const BinaryGrid& labels, MgnWeights& grads) {
  const MgnConfig& cfg = weights.config;
  const int L = cfg.embed_dim;
  const int N = cfg.n_patches();
  const int M = cfg.tokens();
  const int d = cfg.head_dim();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));

  MgnTrace t;
  mgn_forward(weights, image, &t);
  const double loss = bce_loss(t.scores, labels);

  // d loss / d score_logits: the classic sigmoid+BCE form (s - y) / n,
  // zeroed where the clamp is active so finite differences agree exactly.
  Matrix d_logits(1, N);
  for (int j = 0; j < N; ++j) {
    double s = t.scores.values[j];
    if (s <= kBceClamp || s >= 1.0 - kBceClamp) {
      d_logits(0, j) = 0.0;
    } else {
      d_logits(0, j) = (s - labels.bits[j]) / static_cast<double>(N);
    }
  }

  // head
  grads.head.w = add(grads.head.w, matmul(transpose(t.cls_attn), d_logits));
  grads.head.b = add(grads.head.b, d_logits);
  Matrix d_cls_attn = matmul(d_logits, transpose(weights.head.w));  // 1 x N

  // cls attention -> extra attention pre-softmax logits (row 0, patch cols)
  Matrix d_qkv2(M, 3 * L);
  for (int h = 0; h < cfg.heads; ++h) {
    Matrix d_head_logits(M, M);
    for (int j = 0; j < N; ++j) d_head_logits(0, j + 1) = d_cls_attn(0, j) / cfg.heads;
    Matrix q2 = slice_cols(t.qkv2, h * d, (h + 1) * d);
    Matrix k2 = slice_cols(t.qkv2, L + h * d, L + (h + 1) * d);
    Matrix dq2 = scale(matmul(d_head_logits, k2), inv_sqrt_d);
    Matrix dk2 = scale(matmul(transpose(d_head_logits), q2), inv_sqrt_d);
    assign_cols(d_qkv2, h * d, dq2);
    assign_cols(d_qkv2, L + h * d, dk2);
    // value/projection path carries no gradient: the head reads only Q/K
  }
  grads.extra.qkv.w = add(grads.extra.qkv.w, matmul(transpose(t.ln3_out), d_qkv2));
  grads.extra.qkv.b = add(grads.extra.qkv.b, col_sums(d_qkv2));
  Matrix d_ln3_out = matmul(d_qkv2, transpose(weights.extra.qkv.w));

  LayerNormGrads ln3_g = layer_norm_backward(t.ln3_cache, weights.extra.ln.gamma, d_ln3_out);
  grads.extra.ln.gamma = add(grads.extra.ln.gamma, ln3_g.dgamma);
  grads.extra.ln.beta = add(grads.extra.ln.beta, ln3_g.dbeta);
  Matrix d_res2 = std::move(ln3_g.dx);

  // ffn backward
  Matrix d_res1 = d_res2;  // residual branch
  grads.ffn_fc2.w = add(grads.ffn_fc2.w, matmul(transpose(t.ffn_act), d_res2));
  grads.ffn_fc2.b = add(grads.ffn_fc2.b, col_sums(d_res2));
  Matrix d_ffn_act = matmul(d_res2, transpose(weights.ffn_fc2.w));
  Matrix d_ffn_pre = hadamard(d_ffn_act, gelu_grad(t.ffn_pre));
  grads.ffn_fc1.w = add(grads.ffn_fc1.w, matmul(transpose(t.ln2_out), d_ffn_pre));
  grads.ffn_fc1.b = add(grads.ffn_fc1.b, col_sums(d_ffn_pre));
  Matrix d_ln2_out = matmul(d_ffn_pre, transpose(weights.ffn_fc1.w));

  LayerNormGrads ln2_g = layer_norm_backward(t.ln2_cache, weights.ln2.gamma, d_ln2_out);
  grads.ln2.gamma = add(grads.ln2.gamma, ln2_g.dgamma);
  grads.ln2.beta = add(grads.ln2.beta, ln2_g.dbeta);
  d_res1 = add(d_res1, ln2_g.dx);

  // attention backward
  Matrix d_tokens = d_res1;  // residual branch
  grads.attn_proj.w = add(grads.attn_proj.w, matmul(transpose(t.attn_concat), d_res1));
  grads.attn_proj.b = add(grads.attn_proj.b, col_sums(d_res1));
  Matrix d_concat = matmul(d_res1, transpose(weights.attn_proj.w));

  Matrix d_qkv(M, 3 * L);
  for (int h = 0; h < cfg.heads; ++h) {
    Matrix q = slice_cols(t.qkv, h * d, (h + 1) * d);
    Matrix k = slice_cols(t.qkv, L + h * d, L + (h + 1) * d);
    Matrix v = slice_cols(t.qkv, 2 * L + h * d, 2 * L + (h + 1) * d);
    Matrix d_head_out = slice_cols(d_concat, h * d, (h + 1) * d);
    const Matrix& soft = t.attn[h];
    Matrix d_soft = matmul(d_head_out, transpose(v));
    Matrix d_v = matmul(transpose(soft), d_head_out);
    Matrix d_head_logits = softmax_rows_backward(soft, d_soft);
    Matrix dq = scale(matmul(d_head_logits, k), inv_sqrt_d);
    Matrix dk = scale(matmul(transpose(d_head_logits), q), inv_sqrt_d);
    assign_cols(d_qkv, h * d, dq);
    assign_cols(d_qkv, L + h * d, dk);
    assign_cols(d_qkv, 2 * L + h * d, d_v);
  }
  grads.qkv.w = add(grads.qkv.w, matmul(transpose(t.ln1_out), d_qkv));
  grads.qkv.b = add(grads.qkv.b, col_sums(d_qkv));
  Matrix d_ln1_out = matmul(d_qkv, transpose(weights.qkv.w));

  LayerNormGrads ln1_g = layer_norm_backward(t.ln1_cache, weights.ln1.gamma, d_ln1_out);
  grads.ln1.gamma = add(grads.ln1.gamma, ln1_g.dgamma);
  grads.ln1.beta = add(grads.ln1.beta, ln1_g.dbeta);
  d_tokens = add(d_tokens, ln1_g.dx);

  // embeddings
  grads.pos_embed = add(grads.pos_embed, d_tokens);
  for (int j = 0; j < L; ++j) grads.cls_token(0, j) += d_tokens(0, j);
  Matrix d_embedded = slice_rows(d_tokens, 1, M);
  grads.patch_embed.w = add(grads.patch_embed.w, matmul(transpose(t.patches), d_embedded));
  grads.patch_embed.b = add(grads.patch_embed.b, col_sums(d_embedded));

  return loss;
}

namespace {

void scale_tensors(MgnWeights& w, double k) {
  for (auto& [name, tensor] : w.tensors()) {
    for (double& v : tensor->values()) v *= k;
  }
}

}  // namespace

std::vector<double> mgn_train(MgnWeights& weights, const std::vector<TrainSample>& data,
                              const TrainOptions& options) {
  if (data.empty()) throw ConfigError("train: dataset is empty");
  if (!(options.lr >= 0.0)) throw ConfigError("train: learning rate must be >= 0");
  if (options.epochs < 0 || options.batch < 1) throw ConfigError("train: bad epochs/batch");

  MgnWeights m_state = MgnWeights::zeros(weights.config);
  MgnWeights v_state = MgnWeights::zeros(weights.config);
  auto w_tensors = weights.tensors();
  auto m_tensors = m_state.tensors();
  auto v_tensors = v_state.tensors();

  Rng rng(options.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  std::vector<double> history;
  history.reserve(options.epochs);
  int64_t step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += options.batch) {
      const size_t end = std::min(order.size(), start + options.batch);
      const size_t bsz = end - start;
      MgnWeights grads = MgnWeights::zeros(weights.config);
      double batch_loss = 0.0;
      for (size_t i = start; i < end; ++i) {
        const TrainSample& sample = data[order[i]];
        batch_loss += mgn_loss_and_grad(weights, sample.image, sample.labels, grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: non-finite loss in batch " + std::to_string(start / options.batch) +
                           " of epoch " + std::to_string(epoch));
      }
      scale_tensors(grads, 1.0 / static_cast<double>(bsz));
      epoch_loss += batch_loss;

      // Adam with bias correction
      ++step;
      auto g_tensors = grads.tensors();
      const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(step));
      for (size_t ti = 0; ti < w_tensors.size(); ++ti) {
        auto& wv = w_tensors[ti].second->values();
        auto& mv = m_tensors[ti].second->values();
        auto& vv = v_tensors[ti].second->values();
        auto& gv = g_tensors[ti].second->values();
        for (size_t i = 0; i < wv.size(); ++i) {
          mv[i] = options.beta1 * mv[i] + (1.0 - options.beta1) * gv[i];
          vv[i] = options.beta2 * vv[i] + (1.0 - options.beta2) * gv[i] * gv[i];
          double m_hat = mv[i] / bc1;
          double v_hat = vv[i] / bc2;
          wv[i] -= options.lr * m_hat / (std::sqrt(v_hat) + options.eps);
        }
      }
    }
    history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return history;
}

// ---- serialization ----

namespace {

constexpr char kMagic[8] = {'C', 'S', 'K', 'M', 'G', 'N', '0', '1'};

nlohmann::json config_to_json(const MgnConfig& c) {
  return {{"input_h", c.input_h}, {"input_w", c.input_w}, {"channels", c.channels},
          {"patch", c.patch},     {"embed_dim", c.embed_dim}, {"heads", c.heads},
          {"ffn_dim", c.ffn_dim}};
}

MgnConfig config_from_json(const nlohmann::json& j) {
  MgnConfig c;
  c.input_h = j.at("input_h").get<int>();
  c.input_w = j.at("input_w").get<int>();
  c.channels = j.at("channels").get<int>();
  c.patch = j.at("patch").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  return c;
}

}  // namespace

void save_weights(const MgnWeights& weights, const std::filesystem::path& path) {
  nlohmann::json manifest;
  manifest["config"] = config_to_json(weights.config);
  nlohmann::json tensor_list = nlohmann::json::array();
  size_t offset = 0;
  auto tensors = weights.tensors();
  for (auto& [name, tensor] : tensors) {
    tensor_list.push_back({{"name", name},
                           {"rows", tensor->rows()},
                           {"cols", tensor->cols()},
                           {"offset", offset}});
    offset += tensor->size() * sizeof(double);
  }
  manifest["tensors"] = tensor_list;
  manifest["payload_bytes"] = offset;

  std::string manifest_bytes = manifest.dump();
  std::string out;
  out.reserve(sizeof(kMagic) + 4 + manifest_bytes.size() + offset);
  out.append(kMagic, sizeof(kMagic));
  auto len = static_cast<uint32_t>(manifest_bytes.size());
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
  out += manifest_bytes;
  for (auto& [name, tensor] : tensors) {
    const char* raw = reinterpret_cast<const char*>(tensor->data());
    out.append(raw, tensor->size() * sizeof(double));  // IEEE-754 little-endian
  }
  atomic_write_file(path, out);
}

MgnWeights load_weights(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string name = path.filename().string();
  if (bytes.size() < sizeof(kMagic) + 4 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError(name + ": not a weight file (bad magic)");
  }
  uint32_t len = 0;
  for (int i = 0; i < 4; ++i) {
    len |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[sizeof(kMagic) + i])) << (8 * i);
  }
  const size_t manifest_start = sizeof(kMagic) + 4;
  if (bytes.size() < manifest_start + len) {
    throw FormatError(name + ": truncated manifest");
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(manifest_start, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": bad manifest json: " + e.what());
  }

  MgnConfig config;
  MgnWeights weights;
  try {
    config = config_from_json(manifest.at("config"));
    config.validate();
    weights = MgnWeights::zeros(config);

    const size_t payload_start = manifest_start + len;
    const size_t payload_bytes = manifest.at("payload_bytes").get<size_t>();
    if (bytes.size() - payload_start < payload_bytes) {
      throw FormatError(name + ": truncated payload (" +
                        std::to_string(bytes.size() - payload_start) + " of " +
                        std::to_string(payload_bytes) + " bytes)");
    }

    auto tensors = weights.tensors();
    const auto& tensor_list = manifest.at("tensors");
    if (tensor_list.size() != tensors.size()) {
      throw FormatError(name + ": manifest lists " + std::to_string(tensor_list.size()) +
                        " tensors, expected " + std::to_string(tensors.size()));
    }
    for (size_t i = 0; i < tensors.size(); ++i) {
      const auto& entry = tensor_list[i];
      auto& [tname, tensor] = tensors[i];
      if (entry.at("name").get<std::string>() != tname) {
        throw FormatError(name + ": tensor " + std::to_string(i) + " is '" +
                          entry.at("name").get<std::string>() + "', expected '" + tname + "'");
      }
      int rows = entry.at("rows").get<int>();
      int cols = entry.at("cols").get<int>();
      if (rows != tensor->rows() || cols != tensor->cols()) {
        throw FormatError(name + ": tensor '" + tname + "' has shape [" + std::to_string(rows) +
                          "x" + std::to_string(cols) + "], config implies " + tensor->shape_str());
      }
      size_t off = entry.at("offset").get<size_t>();
      size_t nbytes = tensor->size() * sizeof(double);
      if (off + nbytes > payload_bytes) {
        throw FormatError(name + ": tensor '" + tname + "' extends past the payload");
      }
      std::memcpy(tensor->data(), bytes.data() + payload_start + off, nbytes);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(name + ": bad manifest: " + e.what());
  }
  return weights;
}

}  // namespace cisskip
