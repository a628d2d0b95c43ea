#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "microkd/rng.hpp"

namespace mkd {

struct ModelDims {
  int vocab = 0;
  int context = 0;
  int embed = 0;
  int hidden = 0;

  int input_width() const { return context * embed; }
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// Preset sizes; context is shared so teacher and student see identical windows.
ModelDims teacher_dims(int vocab);  // embed 32, hidden 128, context 16
ModelDims student_dims(int vocab);  // embed 8,  hidden 16,  context 16

/// Fixed-context MLP language model. The window is the `context` most recent
/// ids (left-padded with PAD); their embeddings are concatenated, pushed
/// through one tanh hidden layer, and projected to vocabulary logits.
struct ModelParams {
  ModelDims dims;
  uint64_t init_seed = 0;
  std::vector<double> embed;  // vocab x embed, row-major
  std::vector<double> w1;     // (context*embed) x hidden, row-major
  std::vector<double> b1;     // hidden
  std::vector<double> w2;     // hidden x vocab, row-major
  std::vector<double> b2;     // vocab

  std::size_t param_count() const;
  void zero();

  /// The five blocks in checkpoint field order.
  std::vector<std::span<double>> blocks();
  std::vector<std::span<const double>> blocks() const;
};

ModelParams init_params(const ModelDims& dims, uint64_t seed);

/// Scratch space for one forward/backward position.
struct Workspace {
  std::vector<double> x;       // concatenated embeddings
  std::vector<double> h;       // tanh activations
  std::vector<double> logits;
  std::vector<double> dh;      // backward scratch
};

/// Left-padded window of the `context` most recent ids of prefix.
void context_window(std::span<const int> prefix, int context, std::vector<int>& out);

/// Logits for the next token after `window` (exactly dims.context ids).
void forward_logits(const ModelParams& params, std::span<const int> window, Workspace& ws);

/// softmax(logits / tau) with max-subtraction; tau > 0.
void softmax_temperature(std::span<const double> logits, double tau, std::span<double> out);

/// Accumulates d(loss)/d(params) into grads given d(loss)/d(logits) at one
/// position. Recomputes the forward pass internally via ws.
void backprop(const ModelParams& params, std::span<const int> window,
              std::span<const double> grad_logits, Workspace& ws, ModelParams& grads);

/// Same, but assumes ws already holds forward_logits(params, window, ws)
/// (skips the recompute; the training loop always forwards first).
void backprop_prepared(const ModelParams& params, std::span<const int> window,
                       std::span<const double> grad_logits, Workspace& ws,
                       ModelParams& grads);

/// Ancestral sampling at the given temperature. Returns response tokens,
/// including the terminating EOS when one is produced within max_len.
std::vector<int> generate(const ModelParams& params, std::span<const int> prompt,
                          double temperature, int max_len, Rng& rng);

struct AdamState {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
  ModelParams m;
  ModelParams v;

  static AdamState create(const ModelDims& dims, double learning_rate);
};

/// One bias-corrected Adam update; errors on non-finite gradients.
void optimizer_step(ModelParams& params, AdamState& state, const ModelParams& grads);

/// Checkpoint file: magic "TLM1", one JSON header line (dims, seed, role,
/// metadata), then the parameter blocks as raw little-endian float64.
void save_checkpoint(const ModelParams& params, const std::string& role,
                     const std::string& metadata_json, const std::string& path);

struct Checkpoint {
  ModelParams params;
  std::string role;
  std::string metadata_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace mkd
