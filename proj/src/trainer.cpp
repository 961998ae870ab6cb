#include "mwnmt/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "mwnmt/decoding.hpp"
#include "mwnmt/errors.hpp"

namespace mwnmt {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (max_len < 1) throw ConfigError("max_len must be positive");
  if (!(clip_norm > 0) || !std::isfinite(clip_norm)) throw ConfigError("clip_norm must be positive and finite");
  if (!(finetune_clip_norm > 0) || !std::isfinite(finetune_clip_norm)) {
    throw ConfigError("finetune_clip_norm must be positive and finite");
  }
  if (!(lr >= 0) || !std::isfinite(lr)) throw ConfigError("lr must be non-negative and finite");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (eval_interval < 1) throw ConfigError("eval_interval must be positive");
  if (max_updates < 1) throw ConfigError("max_updates must be positive");
  if (eval_threads < 1) throw ConfigError("eval_threads must be positive");
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg, TrainConfig base) {
  TrainConfig c = base;
  c.batch_size = cfg.get_int("batch_size", c.batch_size);
  c.max_len = cfg.get_int("max_len", c.max_len);
  c.clip_norm = cfg.get_double("clip_norm", c.clip_norm);
  c.finetune_clip_norm = cfg.get_double("finetune_clip_norm", c.finetune_clip_norm);
  c.lr = cfg.get_double("lr", c.lr);
  c.patience = cfg.get_int("patience", c.patience);
  c.eval_interval = cfg.get_int("eval_interval", c.eval_interval);
  c.max_updates = cfg.get_int("max_updates", static_cast<int>(c.max_updates));
  c.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<int>(c.seed)));
  c.eval_threads = cfg.get_int("eval_threads", c.eval_threads);
  return c;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig cfg;
  cfg.set("batch_size", std::to_string(batch_size));
  cfg.set("max_len", std::to_string(max_len));
  cfg.set("clip_norm", fmt(clip_norm));
  cfg.set("finetune_clip_norm", fmt(finetune_clip_norm));
  cfg.set("lr", fmt(lr));
  cfg.set("patience", std::to_string(patience));
  cfg.set("eval_interval", std::to_string(eval_interval));
  cfg.set("max_updates", std::to_string(max_updates));
  cfg.set("seed", std::to_string(seed));
  cfg.set("eval_threads", std::to_string(eval_threads));
  return cfg;
}

Schedule::Schedule(std::size_t num_pairs) : num_pairs_(num_pairs) {
  if (num_pairs == 0) throw ContractError("schedule needs at least one pair");
}

std::size_t Schedule::next() { return cursor_++ % num_pairs_; }

namespace {

double clip_spans(std::vector<std::span<double>>& grads, const std::vector<std::string>& names, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip norm must be positive");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (double g : grads[i]) {
      if (!std::isfinite(g)) throw TrainingError("non-finite gradient in parameter " + names[i]);
      sq += g * g;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& span : grads)
      for (double& g : span) g *= scale;
  }
  return norm;
}

}  // namespace

double clip_global_norm(std::span<const NamedTensor> params, double max_norm) {
  std::vector<std::span<double>> grads;
  std::vector<std::string> names;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    Tensor t = p.tensor;
    grads.push_back(t.grad_mut());
    names.push_back(p.name);
  }
  return clip_spans(grads, names, max_norm);
}

double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm) {
  std::vector<std::span<double>> spans;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    spans.emplace_back(grads[i]);
    names.push_back("#" + std::to_string(i));
  }
  return clip_spans(spans, names, max_norm);
}

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::update(const std::string& name, std::span<double> param, std::span<const double> grad) {
  if (param.size() != grad.size()) {
    throw DimensionError("adam: parameter " + name + " has " + std::to_string(param.size()) + " entries, gradient " +
                         std::to_string(grad.size()));
  }
  Slot& s = slots_[name];
  if (s.m.empty()) {
    s.m.assign(param.size(), 0.0);
    s.v.assign(param.size(), 0.0);
  } else if (s.m.size() != param.size()) {
    throw DimensionError("adam: parameter " + name + " changed size from " + std::to_string(s.m.size()) + " to " +
                         std::to_string(param.size()));
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
    s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
    param[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + eps_);
  }
}

void Adam::update(std::span<const NamedTensor> params) {
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    Tensor t = p.tensor;
    update(p.name, t.data_mut(), t.grad());
  }
}

long Adam::steps(const std::string& name) const {
  auto it = slots_.find(name);
  return it == slots_.end() ? 0 : it->second.step;
}

void TrainLog::emit(std::string line) {
  if (sink_) *sink_ << line << '\n' << std::flush;
  lines_.push_back(std::move(line));
}

void TrainLog::config(const std::string& key, const std::string& value) { emit("C\t" + key + "\t" + value); }

void TrainLog::update(long update, const std::string& pair, double loss, double pre_norm) {
  emit("U\t" + std::to_string(update) + "\t" + pair + "\t" + fmt(loss) + "\t" + fmt(pre_norm));
}

void TrainLog::eval(int index, long update, const std::vector<std::pair<std::string, double>>& per_pair,
                    double mean) {
  std::string pairs;
  for (const auto& [name, score] : per_pair) pairs += (pairs.empty() ? "" : ",") + name + "=" + fmt(score);
  emit("E\t" + std::to_string(index) + "\t" + std::to_string(update) + "\t" + pairs + "\t" + fmt(mean));
}

Renderer default_renderer(const MultiWayModel& model) {
  return [&model](const std::string& lang, std::span<const int> ids) {
    if (const LanguageResources* res = model.resources(lang)) return res->pipeline().words(ids);
    TokenSeq out;
    for (int id : ids) {
      if (id == Vocabulary::kEos) break;
      if (id == Vocabulary::kPad || id == Vocabulary::kBos) continue;
      out.push_back(std::to_string(id));
    }
    return out;
  };
}

EvalRecord evaluate_bleu(const MultiWayModel& model, const std::vector<PairCorpus>& dev, const Renderer& render,
                         int threads) {
  EvalRecord rec;
  for (const auto& corpus : dev) {
    const auto hyps = decode_corpus(model, corpus, 1, threads);
    std::vector<TokenSeq> h, r;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      h.push_back(render(corpus.target_lang, hyps[i].tokens));
      r.push_back(render(corpus.target_lang, corpus.examples[i].target));
    }
    rec.bleu.emplace_back(corpus.pair_name(), bleu(h, r).bleu);
    rec.mean += rec.bleu.back().second;
  }
  if (!dev.empty()) rec.mean /= static_cast<double>(dev.size());
  return rec;
}

bool is_finetuned_parameter(const std::string& name) {
  if (name.rfind("shared.", 0) == 0) return true;
  const auto parts = split(name, '.');
  return parts.size() > 3 && parts[0] == "dec" && DecoderParams::is_output_layer(parts[2] + "." + parts[3]);
}

namespace {

using Snapshot = std::vector<std::vector<double>>;

Snapshot take_snapshot(const MultiWayModel& model) {
  Snapshot s;
  for (const auto& p : model.parameters()) s.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return s;
}

void restore_snapshot(const MultiWayModel& model, const Snapshot& s) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) std::ranges::copy(s[i], params[i].tensor.data_mut().begin());
}

TrainResult run_loop(MultiWayModel& model, const std::vector<PairCorpus>& corpora,
                     const std::vector<PairCorpus>& dev, const TrainConfig& config, TrainLog& log,
                     const Renderer& render, bool finetuning) {
  config.validate();
  if (corpora.empty()) throw ConfigError("training needs at least one corpus");
  for (const auto& c : corpora) {
    model.encoder(c.source_lang);
    model.decoder(c.target_lang);
  }
  for (const auto& c : dev) {
    model.encoder(c.source_lang);
    model.decoder(c.target_lang);
  }

  std::vector<PairCorpus> filtered = corpora;
  for (auto& c : filtered) {
    filter_by_length(c, config.max_len);
    if (c.empty()) throw InputError("no training examples left for " + c.pair_name());
  }
  std::vector<BatchIterator> iters;
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    iters.emplace_back(filtered[i], config.batch_size, config.seed * 1000003ULL + i);
  }

  const Renderer rend = render ? render : default_renderer(model);
  const double clip = finetuning ? config.finetune_clip_norm : config.clip_norm;
  const KeyValueConfig echo = config.to_config();
  for (const auto& [k, v] : echo.entries()) log.config(k, v);
  log.config("phase", finetuning ? "finetune" : "train");
  log.config("active_clip_norm", fmt(clip));

  TrainResult result;
  result.pair_updates.assign(filtered.size(), 0);
  Adam adam(config.lr);
  Schedule schedule(filtered.size());

  const bool evaluating = !dev.empty();
  Snapshot best;
  int bad = 0;
  if (evaluating) {
    EvalRecord base = evaluate_bleu(model, dev, rend, config.eval_threads);
    log.eval(0, 0, base.bleu, base.mean);
    result.best_bleu = base.mean;
    result.evals.push_back(std::move(base));
    best = take_snapshot(model);
  }

  for (long update = 1; update <= config.max_updates; ++update) {
    const std::size_t idx = schedule.next();
    const Batch batch = iters[idx].next();
    model.zero_grad();
    const Tensor loss = forward_pair(model, batch);
    if (!std::isfinite(loss.item())) {
      throw TrainingError("non-finite loss on pair " + filtered[idx].pair_name() + " at update " +
                          std::to_string(update));
    }
    backward(loss);

    std::vector<NamedTensor> params = model.pair_parameters(batch.source_lang, batch.target_lang);
    if (finetuning) std::erase_if(params, [](const NamedTensor& p) { return !is_finetuned_parameter(p.name); });
    const double pre = clip_global_norm(params, clip);
    adam.update(params);
    model.zero_grad();
    log.update(update, filtered[idx].pair_name(), loss.item(), pre);
    result.updates = update;
    ++result.pair_updates[idx];

    if (evaluating && update % config.eval_interval == 0) {
      EvalRecord rec = evaluate_bleu(model, dev, rend, config.eval_threads);
      rec.update = update;
      log.eval(static_cast<int>(result.evals.size()), update, rec.bleu, rec.mean);
      if (rec.mean > result.best_bleu) {
        result.best_bleu = rec.mean;
        result.best_update = update;
        best = take_snapshot(model);
        bad = 0;
      } else {
        ++bad;
      }
      result.evals.push_back(std::move(rec));
      if (bad >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  if (evaluating) restore_snapshot(model, best);
  return result;
}

}  // namespace

TrainResult train(MultiWayModel& model, const std::vector<PairCorpus>& corpora, const std::vector<PairCorpus>& dev,
                  const TrainConfig& config, TrainLog& log, const Renderer& render) {
  return run_loop(model, corpora, dev, config, log, render, false);
}

TrainResult finetune(MultiWayModel& model, const std::vector<PairCorpus>& corpora, const std::vector<PairCorpus>& dev,
                     const TrainConfig& config, TrainLog& log, const Renderer& render) {
  if (model.sources().size() * model.targets().size() <= 1) {
    log.config("phase", "finetune skipped (single pair)");
    TrainResult r;
    r.skipped = true;
    return r;
  }
  return run_loop(model, corpora, dev, config, log, render, true);
}

}  // namespace mwnmt
