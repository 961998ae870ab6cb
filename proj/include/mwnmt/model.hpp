#pragma once

// N encoders, M decoders, one shared attention, one shared phi_init and one
// shared context adaptor. Any (source, target) combination is translatable.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mwnmt/attention.hpp"
#include "mwnmt/corpus.hpp"
#include "mwnmt/decoder.hpp"
#include "mwnmt/encoder.hpp"
#include "mwnmt/kvconfig.hpp"
#include "mwnmt/subword.hpp"

namespace mwnmt {

struct ModelDims {
  int word_dim = 32;
  int enc_hidden = 64;   // per direction; languages may override
  int dec_hidden = 64;
  int context_dim = 96;  // d
  int att_dim = 96;      // d_att, also the score hidden size
  int output_hidden = 64;
  int init_hidden = 0;   // shared phi_init hidden size; 0 means context_dim

  static ModelDims desk() { return {}; }
  static ModelDims paper() { return {620, 1000, 1000, 1200, 1200, 1000, 0}; }

  int effective_init_hidden() const { return init_hidden > 0 ? init_hidden : context_dim; }
  int adaptor_dim() const { return dec_hidden; }
  void validate() const;

  // Keys: word_dim enc_hidden dec_hidden context_dim att_dim output_hidden
  // init_hidden. Missing keys keep the value from `base`.
  static ModelDims from_config(const KeyValueConfig& cfg, ModelDims base = desk());
  KeyValueConfig to_config() const;
  bool operator==(const ModelDims&) const = default;
};

struct LanguageSpec {
  std::string name;
  int vocab_size = 0;
  int hidden = 0;  // encoder hidden size override, 0 means ModelDims::enc_hidden

  bool operator==(const LanguageSpec&) const = default;
};

// Optional text-processing assets carried with a checkpoint. Languages
// without merges are processed word by word.
struct LanguageResources {
  std::optional<MergeTable> merges;
  Vocabulary vocab;

  TextPipeline pipeline() const { return merges ? TextPipeline(*merges, vocab) : TextPipeline(vocab); }
};

class MultiWayModel {
 public:
  MultiWayModel(ModelDims dims, std::vector<LanguageSpec> sources, std::vector<LanguageSpec> targets,
                std::uint64_t seed);

  MultiWayModel(MultiWayModel&&) noexcept = default;
  MultiWayModel& operator=(MultiWayModel&&) noexcept = default;
  MultiWayModel(const MultiWayModel&) = delete;
  MultiWayModel& operator=(const MultiWayModel&) = delete;

  // Deep copy with independent parameter storage.
  MultiWayModel clone() const;

  const ModelDims& dims() const { return dims_; }
  const std::vector<LanguageSpec>& sources() const { return sources_; }
  const std::vector<LanguageSpec>& targets() const { return targets_; }
  bool has_source(const std::string& lang) const { return encoders_.contains(lang); }
  bool has_target(const std::string& lang) const { return decoders_.contains(lang); }
  std::vector<std::pair<std::string, std::string>> pairs() const;

  // Throw ConfigError naming the language and the available ones.
  const EncoderParams& encoder(const std::string& lang) const;
  const DecoderParams& decoder(const std::string& lang) const;
  const SharedAttention& attention() const { return attention_; }
  const FeedForward& shared_init() const { return shared_init_; }
  const SharedAdaptor& adaptor() const { return adaptor_; }

  // Every parameter, shared first, then encoders and decoders in
  // declaration order. Names: shared.att.*, shared.init.*, shared.adp.*,
  // enc.<lang>.*, dec.<lang>.*.
  std::vector<NamedTensor> parameters() const;
  // Parameters reachable from one pair: its encoder, its decoder, shared.
  std::vector<NamedTensor> pair_parameters(const std::string& source, const std::string& target) const;
  void zero_grad() const;

  void set_resources(const std::string& lang, LanguageResources res);
  const LanguageResources* resources(const std::string& lang) const;
  const std::map<std::string, LanguageResources>& all_resources() const { return resources_; }

 private:
  ModelDims dims_;
  std::vector<LanguageSpec> sources_;
  std::vector<LanguageSpec> targets_;
  SharedAttention attention_;
  FeedForward shared_init_;
  SharedAdaptor adaptor_;
  std::map<std::string, EncoderParams> encoders_;
  std::map<std::string, DecoderParams> decoders_;
  std::map<std::string, LanguageResources> resources_;
};

TokenMatrix source_matrix(const Batch& batch);
TokenMatrix target_matrix(const Batch& batch);

// Per-row reference log-probabilities [B] for the batch's pair.
Tensor pair_logprobs(const MultiWayModel& model, const Batch& batch);
// Mean per-sentence negative log-likelihood.
Tensor forward_pair(const MultiWayModel& model, const Batch& batch);
// Mean of forward_pair over the given batches; ContractError when empty.
Tensor joint_loss(const MultiWayModel& model, std::span<const Batch> batches);

struct ParamCensus {
  std::map<std::string, long> components;  // e.g. "enc.en.fwd", "shared.att"
  std::map<std::string, long> encoders;    // per language
  std::map<std::string, long> decoders;
  long shared = 0;
  long total = 0;

  long encoder_total() const;
  long decoder_total() const;
};

ParamCensus census(const MultiWayModel& model);

// Closed-form counts for languages sharing one vocabulary size.
long predicted_encoder(const ModelDims& dims, int vocab, int hidden = 0);
long predicted_decoder(const ModelDims& dims, int vocab);
long predicted_shared(const ModelDims& dims);
long predicted_multiway(int n, int m, const ModelDims& dims, int vocab);
// Bank of N*M independent single-pair models.
long predicted_pairwise_total(int n, int m, const ModelDims& dims, int vocab);

}  // namespace mwnmt
