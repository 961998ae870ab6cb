#pragma once

// Adam with global-norm clipping over a round-robin schedule of language
// pairs, early stopping on mean development BLEU, and the finetuning phase
// restricted to shared components and decoder output layers.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mwnmt/bleu.hpp"
#include "mwnmt/corpus.hpp"
#include "mwnmt/kvconfig.hpp"
#include "mwnmt/model.hpp"

namespace mwnmt {

struct TrainConfig {
  int batch_size = 80;
  int max_len = 50;
  double clip_norm = 1.0;
  double finetune_clip_norm = 5.0;
  double lr = 2e-4;
  int patience = 10;       // evaluations without improvement before stopping
  int eval_interval = 200;  // updates between evaluations
  long max_updates = 100000;
  std::uint64_t seed = 1;
  int eval_threads = 1;

  void validate() const;
  static TrainConfig from_config(const KeyValueConfig& cfg, TrainConfig base);
  static TrainConfig from_config(const KeyValueConfig& cfg) { return from_config(cfg, TrainConfig()); }
  KeyValueConfig to_config() const;
};

// pair(k) = pairs[k mod L].
class Schedule {
 public:
  explicit Schedule(std::size_t num_pairs);
  std::size_t next();
  std::size_t cursor() const { return cursor_; }
  std::size_t size() const { return num_pairs_; }

 private:
  std::size_t num_pairs_;
  std::size_t cursor_ = 0;
};

// Scales all gradients by max_norm / g when the global L2 norm g exceeds
// max_norm and returns g. TrainingError naming the parameter on a non-finite
// gradient, in which case nothing is scaled.
double clip_global_norm(std::span<const NamedTensor> params, double max_norm);
double clip_global_norm(std::vector<std::vector<double>>& grads, double max_norm);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // One bias-corrected step per listed parameter; each keeps its own step
  // count. Parameters without an accumulated gradient are left alone.
  void update(std::span<const NamedTensor> params);
  void update(const std::string& name, std::span<double> param, std::span<const double> grad);

  long steps(const std::string& name) const;
  double lr() const { return lr_; }

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
  };
  double lr_, beta1_, beta2_, eps_;
  std::map<std::string, Slot> slots_;
};

// Tab-separated records:
//   C <key> <value>
//   U <update> <src-tgt> <loss> <pre-clip norm>
//   E <eval index> <update> <src-tgt=bleu,...> <mean bleu>
class TrainLog {
 public:
  TrainLog() = default;
  explicit TrainLog(std::ostream& sink) : sink_(&sink) {}

  void config(const std::string& key, const std::string& value);
  void update(long update, const std::string& pair, double loss, double pre_norm);
  void eval(int index, long update, const std::vector<std::pair<std::string, double>>& per_pair, double mean);
  const std::vector<std::string>& lines() const { return lines_; }

 private:
  void emit(std::string line);
  std::ostream* sink_ = nullptr;
  std::vector<std::string> lines_;
};

// Maps target ids to the word tokens BLEU is computed on.
using Renderer = std::function<TokenSeq(const std::string& lang, std::span<const int> ids)>;
// Uses the model's per-language vocabulary and merges when present, the ids
// themselves otherwise.
Renderer default_renderer(const MultiWayModel& model);

struct EvalRecord {
  long update = 0;
  std::vector<std::pair<std::string, double>> bleu;  // per dev pair
  double mean = 0.0;
};

struct TrainResult {
  long updates = 0;
  std::vector<EvalRecord> evals;  // evals[0] is the baseline before any update
  double best_bleu = 0.0;
  long best_update = 0;
  bool early_stopped = false;
  bool skipped = false;
  std::vector<std::size_t> pair_updates;  // updates received per training corpus
};

// Mean dev BLEU of greedy translations, per pair and averaged.
EvalRecord evaluate_bleu(const MultiWayModel& model, const std::vector<PairCorpus>& dev, const Renderer& render,
                         int threads = 1);

TrainResult train(MultiWayModel& model, const std::vector<PairCorpus>& corpora, const std::vector<PairCorpus>& dev,
                  const TrainConfig& config, TrainLog& log, const Renderer& render = {});

// Same loop updating only shared.* and dec.<lang>.out.* with the finetune
// clip norm. Skipped for single-pair models.
TrainResult finetune(MultiWayModel& model, const std::vector<PairCorpus>& corpora, const std::vector<PairCorpus>& dev,
                     const TrainConfig& config, TrainLog& log, const Renderer& render = {});

bool is_finetuned_parameter(const std::string& name);

}  // namespace mwnmt
