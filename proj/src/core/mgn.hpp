#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/grids.hpp"
#include "core/matrix.hpp"
#include "core/sensor.hpp"

namespace cisskip {

// Geometry of the mask generator. The full-scale setup is p=16, L=192 at
// 224x224 input; desk-scale runs shrink L and the input.
struct MgnConfig {
  int input_h = 224;
  int input_w = 224;
  int channels = 3;
  int patch = 16;      // p
  int embed_dim = 192; // L
  int heads = 3;       // H
  int ffn_dim = 768;

  int grid_h() const { return input_h / patch; }
  int grid_w() const { return input_w / patch; }
  int n_patches() const { return grid_h() * grid_w(); }  // N
  int tokens() const { return n_patches() + 1; }         // N + 1 (cls first)
  int head_dim() const { return embed_dim / heads; }     // d = L/H
  int patch_len() const { return patch * patch * channels; }

  void validate() const;
  bool operator==(const MgnConfig&) const = default;
};

// y = x * w + b with b stored as 1 x out.
struct Affine {
  Matrix w;
  Matrix b;
};

struct LayerNormParams {
  Matrix gamma;  // 1 x dim
  Matrix beta;   // 1 x dim
};

// The extra self-attention layer after the encoder block. Only its Q/K path
// feeds the scoring head; the value/projection path is computed but unused.
struct AttentionLayer {
  LayerNormParams ln;
  Affine qkv;
  Affine proj;
};

struct MgnWeights {
  MgnConfig config;

  Affine patch_embed;  // [p*p*ch -> L]
  Matrix cls_token;    // 1 x L
  Matrix pos_embed;    // (N+1) x L

  // pre-norm transformer encoder block
  LayerNormParams ln1;
  Affine qkv;        // [L -> 3L]
  Affine attn_proj;  // [L -> L]
  LayerNormParams ln2;
  Affine ffn_fc1;  // [L -> ffn]
  Affine ffn_fc2;  // [ffn -> L]

  AttentionLayer extra;

  Affine head;  // [N -> N]

  // All tensors with their canonical (manifest) names, in a fixed order
  // shared by init, Adam, serialization and gradient checking.
  std::vector<std::pair<std::string, Matrix*>> tensors();
  std::vector<std::pair<std::string, const Matrix*>> tensors() const;

  static MgnWeights zeros(const MgnConfig& config);
};

// Deterministic init: affine weights ~ truncated normal(0.02), biases 0,
// layer norms gamma=1 beta=0, cls token and positional embedding ~ N(0, 0.02).
MgnWeights init_weights(const MgnConfig& config, uint64_t seed);

int64_t count_params(const MgnConfig& config);
// One forward pass, counting one multiply-accumulate as 2 FLOPs (matrix
// products only).
int64_t estimate_flops(const MgnConfig& config);

// Splits a normalized image (one Matrix per channel, input_h x input_w,
// values in [0,1]) into N rows of flattened p x p patches, channel-planar,
// in row-major patch order.
Matrix patchify(const std::vector<Matrix>& channels, const MgnConfig& config);
std::vector<Matrix> unpatchify(const Matrix& patches, const MgnConfig& config);

// Codes scaled by 1 / (2^N - 1) into [0, 1].
Matrix digital_to_matrix(const DigitalFrame& frame);
Matrix frame_to_matrix(const Frame& frame);

// Every intermediate the backward pass needs.
struct MgnTrace {
  Matrix patches;       // X  [N, p*p*ch]
  Matrix tokens;        // T  [M, L], cls + patch embeddings + pos
  LayerNormCache ln1_cache;
  Matrix ln1_out;       // [M, L]
  Matrix qkv;           // [M, 3L]
  std::vector<Matrix> attn;  // per head, softmax(Q Kt / sqrt(d))  [M, M]
  Matrix attn_concat;   // O [M, L]
  Matrix attn_proj;     // [M, L]
  Matrix res1;          // [M, L]
  LayerNormCache ln2_cache;
  Matrix ln2_out;
  Matrix ffn_pre;       // [M, ffn]
  Matrix ffn_act;       // gelu(ffn_pre)
  Matrix res2;          // [M, L]
  LayerNormCache ln3_cache;
  Matrix ln3_out;
  Matrix qkv2;          // [M, 3L]
  std::vector<Matrix> attn2_logits;  // per head, Q Kt / sqrt(d), pre-softmax
  Matrix extra_out;     // value-path output (computed, unused by the head)
  Matrix cls_attn;      // 1 x N, mean over heads of logits row 0 at patch columns
  Matrix score_logits;  // 1 x N
  ScoreGrid scores;
};

struct MgnOutput {
  ScoreGrid scores;
  std::vector<double> cls_attn;  // length N
};

// Full forward pass; trace is optional (training needs it).
MgnOutput mgn_forward(const MgnWeights& weights, const std::vector<Matrix>& image,
                      MgnTrace* trace = nullptr);

// Mean binary cross-entropy with scores clamped to [1e-7, 1 - 1e-7].
double bce_loss(const ScoreGrid& scores, const BinaryGrid& labels);

// Forward + loss + full backward pass; gradients are accumulated (+=) into
// `grads`, which must have the weights' shapes.
double mgn_loss_and_grad(const MgnWeights& weights, const std::vector<Matrix>& image,
                         const BinaryGrid& labels, MgnWeights& grads);

struct TrainSample {
  std::vector<Matrix> image;
  BinaryGrid labels;
};

struct TrainOptions {
  int epochs = 20;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 8;
  uint64_t seed = 0;
};

// Adam over shuffled minibatches; deterministic given the seed. Returns the
// per-epoch mean sample loss (length = epochs).
std::vector<double> mgn_train(MgnWeights& weights, const std::vector<TrainSample>& data,
                              const TrainOptions& options);

// Weight file: 8-byte magic, little-endian u32 manifest length, JSON
// manifest (config, tensor names/shapes/offsets), then the raw float64
// payload in manifest order. Round-trips bit-exactly.
void save_weights(const MgnWeights& weights, const std::filesystem::path& path);
MgnWeights load_weights(const std::filesystem::path& path);

}  // namespace cisskip
