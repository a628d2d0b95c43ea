#include "microkd/tinylm.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <json.hpp>

#include "microkd/corpus.hpp"
#include "microkd/kernels.hpp"
#include "microkd/util.hpp"

namespace mkd {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

void ModelDims::validate() const {
  if (vocab < 8) throw ConfigError("dims.vocab must be >= 8");
  if (context < 1) throw ConfigError("dims.context must be >= 1");
  if (embed < 1) throw ConfigError("dims.embed must be >= 1");
  if (hidden < 1) throw ConfigError("dims.hidden must be >= 1");
}

ModelDims teacher_dims(int vocab) { return ModelDims{vocab, 16, 32, 128}; }
ModelDims student_dims(int vocab) { return ModelDims{vocab, 16, 8, 16}; }

std::size_t ModelParams::param_count() const {
  return embed.size() + w1.size() + b1.size() + w2.size() + b2.size();
}

void ModelParams::zero() {
  for (auto block : blocks()) std::fill(block.begin(), block.end(), 0.0);
}

std::vector<std::span<double>> ModelParams::blocks() {
  return {std::span<double>(embed), std::span<double>(w1), std::span<double>(b1),
          std::span<double>(w2), std::span<double>(b2)};
}

std::vector<std::span<const double>> ModelParams::blocks() const {
  return {std::span<const double>(embed), std::span<const double>(w1),
          std::span<const double>(b1), std::span<const double>(w2),
          std::span<const double>(b2)};
}

static ModelParams alloc_params(const ModelDims& dims) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  p.embed.assign(static_cast<std::size_t>(dims.vocab) * dims.embed, 0.0);
  p.w1.assign(static_cast<std::size_t>(dims.input_width()) * dims.hidden, 0.0);
  p.b1.assign(static_cast<std::size_t>(dims.hidden), 0.0);
  p.w2.assign(static_cast<std::size_t>(dims.hidden) * dims.vocab, 0.0);
  p.b2.assign(static_cast<std::size_t>(dims.vocab), 0.0);
  return p;
}

ModelParams init_params(const ModelDims& dims, uint64_t seed) {
  ModelParams p = alloc_params(dims);
  p.init_seed = seed;
  struct BlockInit {
    std::vector<double>* data;
    int fan_in;
    const char* tag;
  };
  const BlockInit inits[] = {
      {&p.embed, dims.embed, "init_embed"},
      {&p.w1, dims.input_width(), "init_w1"},
      {&p.w2, dims.hidden, "init_w2"},
  };
  for (const auto& bi : inits) {
    Rng rng = derive_stream(seed, bi.tag, {});
    double scale = 1.0 / std::sqrt(static_cast<double>(bi.fan_in));
    for (double& w : *bi.data) w = rng.uniform(-scale, scale);
  }
  return p;
}

void context_window(std::span<const int> prefix, int context, std::vector<int>& out) {
  out.assign(static_cast<std::size_t>(context), PAD);
  std::size_t n = std::min<std::size_t>(prefix.size(), static_cast<std::size_t>(context));
  for (std::size_t i = 0; i < n; ++i)
    out[static_cast<std::size_t>(context) - n + i] = prefix[prefix.size() - n + i];
}

void forward_logits(const ModelParams& params, std::span<const int> window, Workspace& ws) {
  const ModelDims& d = params.dims;
  if (static_cast<int>(window.size()) != d.context)
    throw ContractError("window size must equal dims.context");
  const int iw = d.input_width();
  ws.x.resize(static_cast<std::size_t>(iw));
  ws.h.resize(static_cast<std::size_t>(d.hidden));
  ws.logits.resize(static_cast<std::size_t>(d.vocab));

  for (int c = 0; c < d.context; ++c) {
    int tok = window[static_cast<std::size_t>(c)];
    if (tok < 0 || tok >= d.vocab)
      throw TokenError("token id out of vocabulary range: " + std::to_string(tok),
                       static_cast<std::size_t>(c));
    std::memcpy(ws.x.data() + static_cast<std::size_t>(c) * d.embed,
                params.embed.data() + static_cast<std::size_t>(tok) * d.embed,
                sizeof(double) * static_cast<std::size_t>(d.embed));
  }

  std::memcpy(ws.h.data(), params.b1.data(), sizeof(double) * static_cast<std::size_t>(d.hidden));
  for (int i = 0; i < iw; ++i) {
    double xi = ws.x[static_cast<std::size_t>(i)];
    if (xi != 0.0)
      kern::axpy(xi, params.w1.data() + static_cast<std::size_t>(i) * d.hidden,
                 ws.h.data(), static_cast<std::size_t>(d.hidden));
  }
  for (double& hj : ws.h) hj = std::tanh(hj);

  std::memcpy(ws.logits.data(), params.b2.data(),
              sizeof(double) * static_cast<std::size_t>(d.vocab));
  for (int j = 0; j < d.hidden; ++j) {
    double hj = ws.h[static_cast<std::size_t>(j)];
    if (hj != 0.0)
      kern::axpy(hj, params.w2.data() + static_cast<std::size_t>(j) * d.vocab,
                 ws.logits.data(), static_cast<std::size_t>(d.vocab));
  }
}

void softmax_temperature(std::span<const double> logits, double tau, std::span<double> out) {
  if (!(tau > 0.0)) throw std::domain_error("softmax temperature must be > 0");
  if (logits.empty()) throw std::domain_error("softmax over empty logits");
  if (out.size() != logits.size()) throw ContractError("softmax output size mismatch");
  double zmax = kern::vmax(logits.data(), logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp((logits[i] - zmax) / tau);
    sum += out[i];
  }
  kern::scal(1.0 / sum, out.data(), out.size());
}

void backprop(const ModelParams& params, std::span<const int> window,
              std::span<const double> grad_logits, Workspace& ws, ModelParams& grads) {
  forward_logits(params, window, ws);
  backprop_prepared(params, window, grad_logits, ws, grads);
}

void backprop_prepared(const ModelParams& params, std::span<const int> window,
                       std::span<const double> grad_logits, Workspace& ws,
                       ModelParams& grads) {
  const ModelDims& d = params.dims;
  if (grads.dims != d) throw ContractError("gradient dims mismatch");
  if (static_cast<int>(grad_logits.size()) != d.vocab)
    throw ContractError("grad_logits size must equal dims.vocab");

  // output layer
  kern::axpy(1.0, grad_logits.data(), grads.b2.data(), static_cast<std::size_t>(d.vocab));
  ws.dh.resize(static_cast<std::size_t>(d.hidden));
  for (int j = 0; j < d.hidden; ++j) {
    const double* w2row = params.w2.data() + static_cast<std::size_t>(j) * d.vocab;
    double hj = ws.h[static_cast<std::size_t>(j)];
    kern::axpy(hj, grad_logits.data(),
               grads.w2.data() + static_cast<std::size_t>(j) * d.vocab,
               static_cast<std::size_t>(d.vocab));
    double dh = kern::dot(w2row, grad_logits.data(), static_cast<std::size_t>(d.vocab));
    ws.dh[static_cast<std::size_t>(j)] = dh * (1.0 - hj * hj);  // tanh backward
  }

  // hidden layer
  kern::axpy(1.0, ws.dh.data(), grads.b1.data(), static_cast<std::size_t>(d.hidden));
  const int iw = d.input_width();
  for (int i = 0; i < iw; ++i) {
    double xi = ws.x[static_cast<std::size_t>(i)];
    if (xi != 0.0)
      kern::axpy(xi, ws.dh.data(), grads.w1.data() + static_cast<std::size_t>(i) * d.hidden,
                 static_cast<std::size_t>(d.hidden));
  }

  // embeddings: dL/dx_i = w1 row i . dh, accumulated into the source token row
  for (int c = 0; c < d.context; ++c) {
    int tok = window[static_cast<std::size_t>(c)];
    double* erow = grads.embed.data() + static_cast<std::size_t>(tok) * d.embed;
    for (int e = 0; e < d.embed; ++e) {
      int i = c * d.embed + e;
      erow[e] += kern::dot(params.w1.data() + static_cast<std::size_t>(i) * d.hidden,
                           ws.dh.data(), static_cast<std::size_t>(d.hidden));
    }
  }
}

std::vector<int> generate(const ModelParams& params, std::span<const int> prompt,
                          double temperature, int max_len, Rng& rng) {
  if (max_len < 1) throw std::domain_error("generate max_len must be >= 1");
  Workspace ws;
  std::vector<int> sequence(prompt.begin(), prompt.end());
  std::vector<int> window;
  std::vector<double> probs(static_cast<std::size_t>(params.dims.vocab));
  std::vector<int> response;
  for (int step = 0; step < max_len; ++step) {
    context_window(sequence, params.dims.context, window);
    forward_logits(params, window, ws);
    softmax_temperature(ws.logits, temperature, probs);
    int tok = static_cast<int>(rng.sample_discrete(probs));
    response.push_back(tok);
    sequence.push_back(tok);
    if (tok == EOS) break;
  }
  return response;
}

AdamState AdamState::create(const ModelDims& dims, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  s.m = alloc_params(dims);
  s.v = alloc_params(dims);
  return s;
}

void optimizer_step(ModelParams& params, AdamState& state, const ModelParams& grads) {
  if (params.dims != state.m.dims || params.dims != grads.dims)
    throw ContractError("optimizer dims mismatch");
  state.step += 1;
  double bc1 = 1.0 / (1.0 - std::pow(state.beta1, static_cast<double>(state.step)));
  double bc2 = 1.0 / (1.0 - std::pow(state.beta2, static_cast<double>(state.step)));
  auto pb = params.blocks();
  auto mb = state.m.blocks();
  auto vb = state.v.blocks();
  auto gb = grads.blocks();
  for (std::size_t k = 0; k < pb.size(); ++k) {
    if (!std::isfinite(kern::vsum(gb[k].data(), gb[k].size())))
      throw TrainError("non-finite gradient", -1, -1, -1);
    kern::adam_step(pb[k].data(), mb[k].data(), vb[k].data(), gb[k].data(), pb[k].size(),
                    state.learning_rate, state.beta1, state.beta2, state.epsilon, bc1, bc2);
  }
}

void save_checkpoint(const ModelParams& params, const std::string& role,
                     const std::string& metadata_json, const std::string& path) {
  json header;
  header["vocab"] = params.dims.vocab;
  header["context"] = params.dims.context;
  header["embed"] = params.dims.embed;
  header["hidden"] = params.dims.hidden;
  header["init_seed"] = params.init_seed;
  header["role"] = role;
  header["metadata"] = metadata_json.empty() ? json::object() : json::parse(metadata_json);
  std::string out = "TLM1";
  out += header.dump();
  out += '\n';
  for (auto block : params.blocks()) {
    const char* bytes = reinterpret_cast<const char*>(block.data());
    out.append(bytes, sizeof(double) * block.size());
  }
  write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 5 || bytes.compare(0, 4, "TLM1") != 0)
    throw ConfigError("not a TLM1 checkpoint: " + path);
  std::size_t eol = bytes.find('\n', 4);
  if (eol == std::string::npos) throw ConfigError("truncated checkpoint header: " + path);
  json header = json::parse(bytes.substr(4, eol - 4));
  ModelDims dims{header.at("vocab").get<int>(), header.at("context").get<int>(),
                 header.at("embed").get<int>(), header.at("hidden").get<int>()};
  Checkpoint ck;
  ck.params = alloc_params(dims);
  ck.params.init_seed = header.at("init_seed").get<uint64_t>();
  ck.role = header.at("role").get<std::string>();
  ck.metadata_json = header.at("metadata").dump();
  std::size_t offset = eol + 1;
  std::size_t need = sizeof(double) * ck.params.param_count();
  if (bytes.size() - offset != need)
    throw ConfigError("checkpoint payload size mismatch: " + path);
  for (auto block : ck.params.blocks()) {
    std::memcpy(block.data(), bytes.data() + offset, sizeof(double) * block.size());
    offset += sizeof(double) * block.size();
  }
  return ck;
}

}  // namespace mkd
