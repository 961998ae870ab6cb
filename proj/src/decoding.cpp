#include "mwnmt/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "mwnmt/errors.hpp"

namespace mwnmt {

namespace {

Tensor repeat_rows(const Tensor& t, int k) {
  Shape shape = t.shape();
  const auto src = t.data();
  shape[0] = k;
  std::vector<double> data;
  data.reserve(src.size() * k);
  for (int i = 0; i < k; ++i) data.insert(data.end(), src.begin(), src.end());
  return Tensor::from_data(std::move(shape), std::move(data));
}

Tensor gather_rows(const Tensor& t, std::span<const int> rows) {
  const int width = t.dim(1);
  const auto src = t.data();
  std::vector<double> data;
  data.reserve(rows.size() * width);
  for (int r : rows) data.insert(data.end(), src.begin() + r * width, src.begin() + (r + 1) * width);
  return Tensor::from_data({static_cast<int>(rows.size()), width}, std::move(data));
}

void log_softmax_rows(std::span<const double> logits, int cols, std::vector<double>& out) {
  out.resize(logits.size());
  for (std::size_t base = 0; base < logits.size(); base += cols) {
    double mx = logits[base];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, logits[base + j]);
    double z = 0.0;
    for (int j = 0; j < cols; ++j) z += std::exp(logits[base + j] - mx);
    const double lz = mx + std::log(z);
    for (int j = 0; j < cols; ++j) out[base + j] = logits[base + j] - lz;
  }
}

void check_max_steps(int max_steps) {
  if (max_steps < 1) throw ConfigError("max_steps must be at least 1, got " + std::to_string(max_steps));
}

}  // namespace

struct PairStepModel::Impl {
  const MultiWayModel* model;
  const DecoderParams* dec;
  AttentionView base;
  Tensor z0;
  mutable AttentionView tiled;
  mutable int tiled_rows = 0;

  const AttentionView& view(int rows) const {
    if (rows == 1) return base;
    if (rows != tiled_rows) {
      tiled.attention = base.attention;
      tiled.keys = repeat_rows(base.keys, rows);
      tiled.contexts = repeat_rows(base.contexts, rows);
      tiled.lengths.assign(rows, base.lengths[0]);
      tiled_rows = rows;
    }
    return tiled;
  }
};

PairStepModel::PairStepModel(const MultiWayModel& model, const std::string& source_lang,
                             const std::string& target_lang, std::span<const int> source)
    : impl_(std::make_unique<Impl>()) {
  NoGradGuard no_grad;
  const EncoderParams& enc = model.encoder(source_lang);
  impl_->model = &model;
  impl_->dec = &model.decoder(target_lang);
  const ContextSet ctx = encode(enc, model.shared_init(), source);
  impl_->base = AttentionView::build(model.attention(), ctx);
  impl_->z0 = init_state(*impl_->dec, ctx.init_vector);
}

PairStepModel::~PairStepModel() = default;

int PairStepModel::vocab_size() const { return impl_->dec->vocab_size(); }

Tensor PairStepModel::initial_state() const { return impl_->z0; }

StepResult PairStepModel::step(const Tensor& states, std::span<const int> prev) const {
  NoGradGuard no_grad;
  if (states.rank() != 2 || states.dim(0) != static_cast<int>(prev.size())) {
    throw DimensionError("step: " + std::to_string(prev.size()) + " previous symbols for states " +
                         shape_str(states.shape()));
  }
  const AttentionView& view = impl_->view(states.dim(0));
  DecoderStep out = advance(*impl_->dec, impl_->model->adaptor(), view, states, prev);
  StepResult result;
  log_softmax_rows(out.logits.data(), vocab_size(), result.logprobs);
  result.states = std::move(out.state);
  return result;
}

Hypothesis greedy_search(const StepModel& model, int max_steps) {
  check_max_steps(max_steps);
  const int v = model.vocab_size();
  Hypothesis hyp;
  Tensor state = model.initial_state();
  int prev = model.bos();
  for (int t = 0; t < max_steps; ++t) {
    StepResult r = model.step(state, std::span<const int>(&prev, 1));
    const auto best = std::max_element(r.logprobs.begin(), r.logprobs.begin() + v);  // first maximum
    prev = static_cast<int>(best - r.logprobs.begin());
    hyp.tokens.push_back(prev);
    hyp.logprob += *best;
    state = std::move(r.states);
    if (prev == model.eos()) {
      hyp.finished = true;
      break;
    }
  }
  return hyp;
}

Hypothesis beam_search(const StepModel& model, int beam_width, int max_steps, BeamStats* stats) {
  if (beam_width < 1) throw ConfigError("beam width must be at least 1, got " + std::to_string(beam_width));
  check_max_steps(max_steps);
  const int v = model.vocab_size();

  struct Candidate {
    double score;
    int row;
    int token;
  };
  std::vector<Hypothesis> live(1), pool;
  Tensor states = model.initial_state();
  std::vector<Candidate> cands;

  for (int t = 0; t < max_steps && !live.empty() && static_cast<int>(pool.size()) < beam_width; ++t) {
    std::vector<int> prev(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) prev[i] = live[i].tokens.empty() ? model.bos() : live[i].tokens.back();
    StepResult r = model.step(states, prev);

    cands.clear();
    for (int i = 0; i < static_cast<int>(live.size()); ++i) {
      for (int k = 0; k < v; ++k) cands.push_back({live[i].logprob + r.logprobs[static_cast<std::size_t>(i) * v + k], i, k});
    }
    if (stats) stats->candidates_per_step.push_back(static_cast<long>(cands.size()));

    const std::size_t keep = std::min(cands.size(), static_cast<std::size_t>(beam_width) - pool.size());
    std::partial_sort(cands.begin(), cands.begin() + keep, cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.row != b.row) return a.row < b.row;
      return a.token < b.token;
    });

    std::vector<Hypothesis> next;
    std::vector<int> rows;
    for (std::size_t c = 0; c < keep; ++c) {
      Hypothesis h = live[cands[c].row];
      h.tokens.push_back(cands[c].token);
      h.logprob = cands[c].score;
      if (cands[c].token == model.eos()) {
        h.finished = true;
        pool.push_back(std::move(h));
      } else {
        next.push_back(std::move(h));
        rows.push_back(cands[c].row);
      }
    }
    live = std::move(next);
    if (!live.empty()) states = gather_rows(r.states, rows);
  }

  if (pool.empty()) pool = std::move(live);
  // First best wins ties, keeping the result independent of container details.
  std::size_t best = 0;
  for (std::size_t i = 1; i < pool.size(); ++i) {
    if (pool[i].normalized() > pool[best].normalized()) best = i;
  }
  return pool[best];
}

int default_max_steps(std::size_t source_len) { return 2 * static_cast<int>(source_len) + 5; }

Hypothesis greedy_decode(const MultiWayModel& model, std::span<const int> source, const std::string& source_lang,
                         const std::string& target_lang, int max_steps) {
  const PairStepModel step(model, source_lang, target_lang, source);
  return greedy_search(step, max_steps > 0 ? max_steps : default_max_steps(source.size()));
}

Hypothesis beam_decode(const MultiWayModel& model, std::span<const int> source, const std::string& source_lang,
                       const std::string& target_lang, int beam_width, int max_steps) {
  const PairStepModel step(model, source_lang, target_lang, source);
  return beam_search(step, beam_width, max_steps > 0 ? max_steps : default_max_steps(source.size()));
}

std::vector<Hypothesis> decode_corpus(const MultiWayModel& model, const PairCorpus& corpus, int beam_width,
                                      int threads) {
  std::vector<Hypothesis> out(corpus.size());
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < corpus.size(); i += stride) {
      const auto& src = corpus.examples[i].source;
      out[i] = beam_width == 1 ? greedy_decode(model, src, corpus.source_lang, corpus.target_lang)
                               : beam_decode(model, src, corpus.source_lang, corpus.target_lang, beam_width);
    }
  };
  const std::size_t n = static_cast<std::size_t>(std::max(1, threads));
  if (n == 1 || corpus.size() < 2) {
    work(0, 1);
    return out;
  }
  std::vector<std::exception_ptr> errors(n);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n; ++w) {
      pool.emplace_back([&, w] {
        try {
          work(w, n);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

double avg_logprob(const MultiWayModel& model, const PairCorpus& corpus, int batch_size) {
  if (corpus.empty()) throw DomainError("avg_logprob: empty corpus " + corpus.pair_name());
  if (batch_size < 1) throw ConfigError("avg_logprob: batch size must be positive");
  NoGradGuard no_grad;
  const std::span<const Example> all(corpus.examples);
  double total = 0.0;
  for (std::size_t i = 0; i < all.size(); i += batch_size) {
    const auto chunk = all.subspan(i, std::min<std::size_t>(batch_size, all.size() - i));
    const Tensor lp = pair_logprobs(model, make_batch(corpus.source_lang, corpus.target_lang, chunk));
    for (double x : lp.data()) total += x;
  }
  return total / static_cast<double>(corpus.size());
}

}  // namespace mwnmt
