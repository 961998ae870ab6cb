#include "mwnmt/model.hpp"

#include <algorithm>
#include <set>

#include "mwnmt/errors.hpp"

namespace mwnmt {

void ModelDims::validate() const {
  const std::pair<const char*, int> fields[] = {{"word_dim", word_dim},       {"enc_hidden", enc_hidden},
                                                {"dec_hidden", dec_hidden},   {"context_dim", context_dim},
                                                {"att_dim", att_dim},         {"output_hidden", output_hidden}};
  for (const auto& [name, value] : fields) {
    if (value < 1) throw ConfigError(std::string(name) + " must be positive, got " + std::to_string(value));
  }
  if (init_hidden < 0) throw ConfigError("init_hidden must be non-negative, got " + std::to_string(init_hidden));
  // h~ = tanh(h) lives in the context space, so d_att has to match d.
  if (att_dim != context_dim) {
    throw ConfigError("att_dim (" + std::to_string(att_dim) + ") must equal context_dim (" +
                      std::to_string(context_dim) + ")");
  }
}

ModelDims ModelDims::from_config(const KeyValueConfig& cfg, ModelDims base) {
  ModelDims d = base;
  d.word_dim = cfg.get_int("word_dim", d.word_dim);
  d.enc_hidden = cfg.get_int("enc_hidden", d.enc_hidden);
  d.dec_hidden = cfg.get_int("dec_hidden", d.dec_hidden);
  d.context_dim = cfg.get_int("context_dim", d.context_dim);
  d.att_dim = cfg.get_int("att_dim", d.att_dim);
  d.output_hidden = cfg.get_int("output_hidden", d.output_hidden);
  d.init_hidden = cfg.get_int("init_hidden", d.init_hidden);
  return d;
}

KeyValueConfig ModelDims::to_config() const {
  KeyValueConfig cfg;
  cfg.set("word_dim", std::to_string(word_dim));
  cfg.set("enc_hidden", std::to_string(enc_hidden));
  cfg.set("dec_hidden", std::to_string(dec_hidden));
  cfg.set("context_dim", std::to_string(context_dim));
  cfg.set("att_dim", std::to_string(att_dim));
  cfg.set("output_hidden", std::to_string(output_hidden));
  cfg.set("init_hidden", std::to_string(init_hidden));
  return cfg;
}

namespace {

void check_languages(const std::vector<LanguageSpec>& langs, const char* side) {
  if (langs.empty()) throw ConfigError(std::string("model needs at least one ") + side + " language");
  std::set<std::string> seen;
  for (const auto& l : langs) {
    if (l.name.empty()) throw ConfigError(std::string("empty ") + side + " language name");
    if (!seen.insert(l.name).second) throw ConfigError("duplicate " + std::string(side) + " language " + l.name);
    if (l.vocab_size <= Vocabulary::kNumReserved) {
      throw ConfigError("vocabulary of " + l.name + " must exceed the " + std::to_string(Vocabulary::kNumReserved) +
                        " reserved symbols, got " + std::to_string(l.vocab_size));
    }
    if (l.hidden < 0) throw ConfigError("negative hidden size for " + l.name);
  }
}

template <typename Map>
std::string available(const Map& m) {
  std::string out;
  for (const auto& [name, _] : m) out += (out.empty() ? "" : ", ") + name;
  return out;
}

}  // namespace

MultiWayModel::MultiWayModel(ModelDims dims, std::vector<LanguageSpec> sources, std::vector<LanguageSpec> targets,
                             std::uint64_t seed)
    : dims_(dims), sources_(std::move(sources)), targets_(std::move(targets)) {
  dims_.validate();
  check_languages(sources_, "source");
  check_languages(targets_, "target");
  ParamInit init(seed);
  attention_ = SharedAttention::make(init, dims_.att_dim, dims_.att_dim);
  shared_init_ = FeedForward::make(init, dims_.context_dim, dims_.effective_init_hidden(), dims_.context_dim);
  adaptor_ = SharedAdaptor::make(init, dims_.context_dim, dims_.adaptor_dim());
  for (const auto& s : sources_) {
    const int hidden = s.hidden > 0 ? s.hidden : dims_.enc_hidden;
    encoders_.emplace(s.name,
                      EncoderParams::make(init, s.name, s.vocab_size, dims_.word_dim, hidden, dims_.context_dim));
  }
  for (const auto& t : targets_) {
    decoders_.emplace(t.name, DecoderParams::make(init, t.name, t.vocab_size, dims_.word_dim, dims_.dec_hidden,
                                                  dims_.context_dim, dims_.att_dim, dims_.adaptor_dim(),
                                                  dims_.output_hidden));
  }
}

MultiWayModel MultiWayModel::clone() const {
  MultiWayModel copy(dims_, sources_, targets_, 0);
  const auto from = parameters();
  auto to = copy.parameters();
  for (std::size_t i = 0; i < from.size(); ++i) {
    std::ranges::copy(from[i].tensor.data(), to[i].tensor.data_mut().begin());
  }
  copy.resources_ = resources_;
  return copy;
}

std::vector<std::pair<std::string, std::string>> MultiWayModel::pairs() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& s : sources_)
    for (const auto& t : targets_) out.emplace_back(s.name, t.name);
  return out;
}

const EncoderParams& MultiWayModel::encoder(const std::string& lang) const {
  auto it = encoders_.find(lang);
  if (it == encoders_.end()) {
    throw ConfigError("unknown source language '" + lang + "' (model has: " + available(encoders_) + ")");
  }
  return it->second;
}

const DecoderParams& MultiWayModel::decoder(const std::string& lang) const {
  auto it = decoders_.find(lang);
  if (it == decoders_.end()) {
    throw ConfigError("unknown target language '" + lang + "' (model has: " + available(decoders_) + ")");
  }
  return it->second;
}

std::vector<NamedTensor> MultiWayModel::parameters() const {
  std::vector<NamedTensor> out;
  attention_.collect("shared.att", out);
  shared_init_.collect("shared.init", out);
  adaptor_.collect("shared.adp", out);
  for (const auto& s : sources_) encoders_.at(s.name).collect("enc." + s.name, out);
  for (const auto& t : targets_) decoders_.at(t.name).collect("dec." + t.name, out);
  return out;
}

std::vector<NamedTensor> MultiWayModel::pair_parameters(const std::string& source, const std::string& target) const {
  std::vector<NamedTensor> out;
  attention_.collect("shared.att", out);
  shared_init_.collect("shared.init", out);
  adaptor_.collect("shared.adp", out);
  encoder(source).collect("enc." + source, out);
  decoder(target).collect("dec." + target, out);
  return out;
}

void MultiWayModel::zero_grad() const {
  for (const auto& p : parameters()) p.tensor.node()->grad.clear();
}

void MultiWayModel::set_resources(const std::string& lang, LanguageResources res) {
  if (!has_source(lang) && !has_target(lang)) throw ConfigError("resources for unknown language '" + lang + "'");
  resources_[lang] = std::move(res);
}

const LanguageResources* MultiWayModel::resources(const std::string& lang) const {
  auto it = resources_.find(lang);
  return it == resources_.end() ? nullptr : &it->second;
}

TokenMatrix source_matrix(const Batch& batch) {
  return {batch.rows, batch.source_len, batch.source, batch.source_lengths};
}

TokenMatrix target_matrix(const Batch& batch) {
  return {batch.rows, batch.target_len, batch.target, batch.target_lengths};
}

Tensor pair_logprobs(const MultiWayModel& model, const Batch& batch) {
  const EncoderParams& enc = model.encoder(batch.source_lang);
  const DecoderParams& dec = model.decoder(batch.target_lang);
  if (batch.rows < 1) throw InputError("empty batch for " + batch.source_lang + "-" + batch.target_lang);
  const TokenMatrix target = target_matrix(batch);
  for (int r = 0; r < target.rows; ++r) {
    if (target.lengths[r] < 1) throw InputError("empty target at row " + std::to_string(r));
    for (int t = 0; t < target.lengths[r]; ++t) {
      const int id = target.at(r, t);
      if (id < 0 || id >= dec.vocab_size()) {
        throw IndexError("target id " + std::to_string(id) + " at row " + std::to_string(r) + " position " +
                         std::to_string(t) + " outside vocabulary of size " + std::to_string(dec.vocab_size()) +
                         " (" + dec.language + ")");
      }
    }
  }
  const ContextSet ctx = encode(enc, model.shared_init(), source_matrix(batch));
  const AttentionView view = AttentionView::build(model.attention(), ctx);
  const Tensor z0 = init_state(dec, ctx.init_vector);
  return teacher_forced_logprob(dec, model.adaptor(), view, z0, target);
}

Tensor forward_pair(const MultiWayModel& model, const Batch& batch) {
  const Tensor lp = pair_logprobs(model, batch);
  return nd::scale(nd::sum(lp), -1.0 / batch.rows);
}

Tensor joint_loss(const MultiWayModel& model, std::span<const Batch> batches) {
  if (batches.empty()) throw ContractError("joint_loss needs at least one batch");
  Tensor total;
  for (const Batch& b : batches) {
    Tensor loss = forward_pair(model, b);
    total = total.defined() ? nd::add(total, loss) : loss;
  }
  return nd::scale(total, 1.0 / static_cast<double>(batches.size()));
}

long ParamCensus::encoder_total() const {
  long s = 0;
  for (const auto& [_, n] : encoders) s += n;
  return s;
}

long ParamCensus::decoder_total() const {
  long s = 0;
  for (const auto& [_, n] : decoders) s += n;
  return s;
}

ParamCensus census(const MultiWayModel& model) {
  ParamCensus c;
  for (const auto& p : model.parameters()) {
    const long n = static_cast<long>(p.tensor.size());
    const auto parts = split(p.name, '.');
    c.total += n;
    if (parts[0] == "shared") {
      c.shared += n;
      c.components["shared." + parts[1]] += n;
    } else {
      (parts[0] == "enc" ? c.encoders : c.decoders)[parts[1]] += n;
      c.components[parts[0] + "." + parts[1] + "." + parts[2]] += n;
    }
  }
  return c;
}

namespace {

long affine_count(long in, long out) { return in * out + out; }
long gru_count(long in, long hidden) { return 3 * in * hidden + 3 * hidden * hidden + 3 * hidden; }
long ff_count(long in, long hidden, long out) { return affine_count(in, hidden) + affine_count(hidden, out); }

}  // namespace

long predicted_encoder(const ModelDims& dims, int vocab, int hidden) {
  const long h = hidden > 0 ? hidden : dims.enc_hidden;
  return static_cast<long>(vocab) * dims.word_dim + 2 * gru_count(dims.word_dim, h) +
         affine_count(2 * h, dims.context_dim);
}

long predicted_decoder(const ModelDims& dims, int vocab) {
  const long w = dims.word_dim, hd = dims.dec_hidden, a = dims.att_dim, c = dims.adaptor_dim();
  return static_cast<long>(vocab) * w + ff_count(dims.context_dim, hd, hd) + ff_count(hd + w, a, a) +
         gru_count(w + c, hd) + affine_count(hd + c + w, dims.output_hidden) + affine_count(dims.output_hidden, vocab);
}

long predicted_shared(const ModelDims& dims) {
  const long a = dims.att_dim;
  return 2 * a * a + a + ff_count(dims.context_dim, dims.effective_init_hidden(), dims.context_dim) +
         affine_count(dims.context_dim, dims.adaptor_dim());
}

long predicted_multiway(int n, int m, const ModelDims& dims, int vocab) {
  return n * predicted_encoder(dims, vocab) + m * predicted_decoder(dims, vocab) + predicted_shared(dims);
}

long predicted_pairwise_total(int n, int m, const ModelDims& dims, int vocab) {
  return static_cast<long>(n) * m * predicted_multiway(1, 1, dims, vocab);
}

}  // namespace mwnmt
