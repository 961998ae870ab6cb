#pragma once

// Greedy and beam-search decoding plus reference log-probability scoring.
//
// The search routines run against StepModel, a minimal interface over "give
// me log-probabilities for the next symbol of each of these K prefixes", so
// they can be checked against hand-built toy distributions.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mwnmt/corpus.hpp"
#include "mwnmt/model.hpp"

namespace mwnmt {

struct Hypothesis {
  std::vector<int> tokens;  // includes the final EOS when finished
  double logprob = 0.0;     // exact sum of the chosen per-step log-probs
  bool finished = false;

  double normalized() const { return tokens.empty() ? logprob : logprob / static_cast<double>(tokens.size()); }
};

struct StepResult {
  Tensor states;                  // [K, state width]
  std::vector<double> logprobs;   // K x vocab, row-major
};

class StepModel {
 public:
  virtual ~StepModel() = default;
  virtual int vocab_size() const = 0;
  virtual int bos() const { return Vocabulary::kBos; }
  virtual int eos() const { return Vocabulary::kEos; }
  virtual Tensor initial_state() const = 0;  // [1, state width]
  virtual StepResult step(const Tensor& states, std::span<const int> prev) const = 0;
};

// One source sentence translated by one (source, target) pair of a model.
class PairStepModel : public StepModel {
 public:
  PairStepModel(const MultiWayModel& model, const std::string& source_lang, const std::string& target_lang,
                std::span<const int> source);
  ~PairStepModel() override;

  int vocab_size() const override;
  Tensor initial_state() const override;
  StepResult step(const Tensor& states, std::span<const int> prev) const override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct BeamStats {
  std::vector<long> candidates_per_step;
};

// Argmax per step, ties to the lowest id; stops at EOS or max_steps.
Hypothesis greedy_search(const StepModel& model, int max_steps);
// Hypotheses that emit EOS leave the beam for a finished pool; the search
// ends when the pool holds beam_width entries, the beam empties or max_steps
// is reached. Returns the best of the pool (or the live beam when nothing
// finished) by logprob / token count.
Hypothesis beam_search(const StepModel& model, int beam_width, int max_steps, BeamStats* stats = nullptr);

int default_max_steps(std::size_t source_len);

// max_steps <= 0 selects default_max_steps.
Hypothesis greedy_decode(const MultiWayModel& model, std::span<const int> source, const std::string& source_lang,
                         const std::string& target_lang, int max_steps = 0);
Hypothesis beam_decode(const MultiWayModel& model, std::span<const int> source, const std::string& source_lang,
                       const std::string& target_lang, int beam_width, int max_steps = 0);

// Decodes every source of the corpus; beam_width 1 is greedy. Sentences are
// spread over `threads` workers reading the frozen model.
std::vector<Hypothesis> decode_corpus(const MultiWayModel& model, const PairCorpus& corpus, int beam_width,
                                      int threads = 1);

// Mean over sentences of the teacher-forced reference log-probability.
double avg_logprob(const MultiWayModel& model, const PairCorpus& corpus, int batch_size = 32);

}  // namespace mwnmt
