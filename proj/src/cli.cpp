#include "mwnmt/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>

#include "mwnmt/bleu.hpp"
#include "mwnmt/checkpoint.hpp"
#include "mwnmt/corpus.hpp"
#include "mwnmt/decoding.hpp"
#include "mwnmt/errors.hpp"
#include "mwnmt/kvconfig.hpp"
#include "mwnmt/model.hpp"
#include "mwnmt/subword.hpp"
#include "mwnmt/synthetic.hpp"
#include "mwnmt/trainer.hpp"

namespace mwnmt {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PairFiles {
  std::string source, target, source_file, target_file;
};

PairFiles parse_pair_files(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 4 || std::ranges::any_of(parts, [](const std::string& p) { return p.empty(); })) {
    throw UsageError("pair '" + text + "' must look like SRC:TGT:src_file:tgt_file");
  }
  return {parts[0], parts[1], parts[2], parts[3]};
}

std::pair<std::string, std::string> parse_pair_names(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) {
    throw UsageError("pair '" + text + "' must look like SRC:TGT");
  }
  return {parts[0], parts[1]};
}

std::pair<std::string, std::string> parse_lang_file(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw UsageError("'" + text + "' must look like LANG:FILE");
  }
  return {text.substr(0, colon), text.substr(colon + 1)};
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::string> read_input(const std::string& path) {
  if (path != "-") return read_lines(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(std::cin, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

// Writes to a file, or to `fallback` for "-".
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (path == "-") {
      stream_ = &fallback;
    } else {
      file_.open(path);
      if (!file_) throw InputError("cannot write '" + path + "'");
      stream_ = &file_;
    }
  }
  std::ostream& operator*() { return *stream_; }

 private:
  std::ofstream file_;
  std::ostream* stream_;
};

ModelDims profile_dims(const std::string& profile) {
  if (profile == "desk") return ModelDims::desk();
  if (profile == "paper") return ModelDims::paper();
  throw UsageError("unknown profile '" + profile + "' (expected desk or paper)");
}

const char* kProfileHelp =
    "Dimension profile. desk: word 32, hidden 64, d = d_att 96, output hidden 64. "
    "paper: word 620, hidden 1000 per direction, d = d_att 1200, output hidden 1000";

// ---- bpe -------------------------------------------------------------------

struct BpeLearnArgs {
  std::string input, out, lang;
  int merges = 1000;
  int min_count = 2;
};

void cmd_bpe_learn(const BpeLearnArgs& a, std::ostream& out) {
  const auto lines = read_input(a.input);
  const MergeTable table = learn_bpe(lines, a.merges, a.lang, a.min_count);
  Output dest(a.out, out);
  save_merges(table, *dest);
}

struct BpeApplyArgs {
  std::string input, codes, out = "-";
};

void cmd_bpe_apply(const BpeApplyArgs& a, std::ostream& out) {
  std::ifstream codes(a.codes);
  if (!codes) throw InputError("cannot open merge table '" + a.codes + "'");
  const BpeSegmenter seg(load_merges(codes));
  const auto lines = read_input(a.input);
  Output dest(a.out, out);
  for (const auto& line : lines) {
    std::string row;
    for (const std::string& tok : tokenize(line)) {
      for (const std::string& u : seg.segment_word(tok)) row += (row.empty() ? "" : " ") + u;
    }
    *dest << row << '\n';
  }
}

struct BpeUndoArgs {
  std::string input, out = "-";
};

void cmd_bpe_undo(const BpeUndoArgs& a, std::ostream& out) {
  const auto lines = read_input(a.input);
  Output dest(a.out, out);
  for (const auto& line : lines) {
    std::vector<std::string> units;
    std::istringstream in(line);
    for (std::string u; in >> u;) units.push_back(u);
    *dest << detokenize(units) << '\n';
  }
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::vector<std::string> pairs, dev, bpe_files, subsample_pairs;
  std::string synthetic, dims_file, config_file, profile = "desk", out, log;
  int synthetic_dev = 100;
  int bpe_merges = 2000;
  int bpe_min_count = 2;
  int vocab_size = 2000;
  double subsample = 1.0;
  bool finetune = false;
  TrainConfig flags;
};

struct PreparedData {
  std::vector<PairCorpus> train, dev;
  std::map<std::string, LanguageResources> resources;
  std::vector<std::string> sources, targets;  // first-appearance order
};

void note_language(std::vector<std::string>& list, const std::string& lang) {
  if (std::ranges::find(list, lang) == list.end()) list.push_back(lang);
}

PreparedData prepare_text(const TrainArgs& a, int max_len, std::ostream& err) {
  PreparedData d;
  std::vector<PairFiles> train_specs, dev_specs;
  for (const auto& p : a.pairs) train_specs.push_back(parse_pair_files(p));
  for (const auto& p : a.dev) dev_specs.push_back(parse_pair_files(p));

  std::map<std::string, std::vector<std::string>> text;
  for (const auto& p : train_specs) {
    note_language(d.sources, p.source);
    note_language(d.targets, p.target);
    auto src = read_lines(p.source_file);
    auto tgt = read_lines(p.target_file);
    text[p.source].insert(text[p.source].end(), src.begin(), src.end());
    text[p.target].insert(text[p.target].end(), tgt.begin(), tgt.end());
  }
  for (const auto& p : dev_specs) {
    if (std::ranges::find(d.sources, p.source) == d.sources.end() ||
        std::ranges::find(d.targets, p.target) == d.targets.end()) {
      throw ConfigError("dev pair " + p.source + "-" + p.target + " uses a language without training data");
    }
  }

  std::map<std::string, std::string> given;
  for (const auto& s : a.bpe_files) {
    auto [lang, file] = parse_lang_file(s);
    if (!text.contains(lang)) throw ConfigError("--bpe names language '" + lang + "' that no pair uses");
    given[lang] = file;
  }
  for (const auto& [lang, lines] : text) {
    LanguageResources res;
    if (auto it = given.find(lang); it != given.end()) {
      std::ifstream in(it->second);
      if (!in) throw InputError("cannot open merge table '" + it->second + "'");
      res.merges = load_merges(in, lang);
    } else if (a.bpe_merges > 0) {
      res.merges = learn_bpe(lines, a.bpe_merges, lang, a.bpe_min_count);
    }
    const TextPipeline splitter = res.merges ? TextPipeline(*res.merges, Vocabulary()) : TextPipeline(Vocabulary());
    std::vector<std::vector<std::string>> units;
    units.reserve(lines.size());
    for (const auto& line : lines) units.push_back(splitter.units(line));
    res.vocab = build_vocab(units, a.vocab_size + Vocabulary::kNumReserved, lang);
    d.resources.emplace(lang, std::move(res));
  }

  auto load = [&](const PairFiles& p, int limit) {
    LoadReport r = load_parallel(p.source_file, p.target_file, p.source, p.target,
                                 d.resources.at(p.source).pipeline(), d.resources.at(p.target).pipeline(), limit);
    for (const auto& w : r.warnings) err << "warning: " << w << '\n';
    if (r.dropped > 0) {
      err << "note: dropped " << r.dropped << " pairs of " << p.source << "-" << p.target << " longer than " << limit
          << " symbols\n";
    }
    return std::move(r.corpus);
  };
  for (const auto& p : train_specs) d.train.push_back(load(p, max_len));
  for (const auto& p : dev_specs) d.dev.push_back(load(p, std::numeric_limits<int>::max()));
  return d;
}

PreparedData prepare_synthetic(const TrainArgs& a) {
  std::ifstream in(a.synthetic);
  if (!in) throw InputError("cannot open synthetic spec '" + a.synthetic + "'");
  const SyntheticFamily family(parse_synthetic_spec(in, a.synthetic));
  PreparedData d;
  std::mt19937_64 rng(family.spec().seed);
  std::set<std::vector<int>> used;
  for (const auto& req : family.spec().pairs) {
    note_language(d.sources, req.source);
    note_language(d.targets, req.target);
    d.train.push_back(family.make_corpus(req.source, req.target, family.sample_unique(req.count, rng, used)));
  }
  for (const auto& req : family.spec().pairs) {
    d.dev.push_back(family.make_corpus(req.source, req.target, family.sample_unique(a.synthetic_dev, rng, used)));
  }
  for (const auto& lang : d.sources) d.resources[lang] = {std::nullopt, family.vocabulary(lang)};
  for (const auto& lang : d.targets) d.resources[lang] = {std::nullopt, family.vocabulary(lang)};
  return d;
}

void apply_subsampling(const TrainArgs& a, PreparedData& d, std::uint64_t seed) {
  if (a.subsample == 1.0) return;
  std::set<std::string> selected;
  for (const auto& s : a.subsample_pairs) {
    auto [src, tgt] = parse_pair_names(s);
    const std::string name = src + "-" + tgt;
    if (std::ranges::none_of(d.train, [&](const PairCorpus& c) { return c.pair_name() == name; })) {
      throw ConfigError("--subsample-pair " + s + " is not a training pair");
    }
    selected.insert(name);
  }
  for (auto& c : d.train) {
    if (selected.empty() || selected.contains(c.pair_name())) c = subsample(c, a.subsample, seed);
  }
}

int cmd_train(const TrainArgs& a, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (a.pairs.empty() == a.synthetic.empty()) throw UsageError("train needs --pair (one or more) or --synthetic");
  if (!a.synthetic.empty() && !a.dev.empty()) throw UsageError("--dev is generated for --synthetic runs");

  KeyValueConfig cfg;
  std::string config_path = a.config_file;
  if (config_path.empty()) {
    if (const char* env = std::getenv(kConfigEnv)) config_path = env;
  }
  if (!config_path.empty()) cfg = KeyValueConfig::load(config_path);
  ModelDims dims = ModelDims::from_config(cfg, profile_dims(a.profile));
  if (!a.dims_file.empty()) dims = ModelDims::from_config(KeyValueConfig::load(a.dims_file), dims);
  dims.validate();

  TrainConfig tc = TrainConfig::from_config(cfg);
  auto given = [&](const char* name) { return sub.get_option(name)->count() > 0; };
  if (given("--lr")) tc.lr = a.flags.lr;
  if (given("--batch")) tc.batch_size = a.flags.batch_size;
  if (given("--max-len")) tc.max_len = a.flags.max_len;
  if (given("--clip")) tc.clip_norm = a.flags.clip_norm;
  if (given("--finetune-clip")) tc.finetune_clip_norm = a.flags.finetune_clip_norm;
  if (given("--seed")) tc.seed = a.flags.seed;
  if (given("--patience")) tc.patience = a.flags.patience;
  if (given("--eval-interval")) tc.eval_interval = a.flags.eval_interval;
  if (given("--max-updates")) tc.max_updates = a.flags.max_updates;
  if (given("--threads")) tc.eval_threads = a.flags.eval_threads;
  tc.validate();
  if (!(a.subsample > 0.0 && a.subsample <= 1.0)) throw ConfigError("--subsample must lie in (0, 1]");

  PreparedData data = a.synthetic.empty() ? prepare_text(a, tc.max_len, err) : prepare_synthetic(a);
  apply_subsampling(a, data, tc.seed);

  std::vector<LanguageSpec> sources, targets;
  for (const auto& l : data.sources) sources.push_back({l, data.resources.at(l).vocab.size(), 0});
  for (const auto& l : data.targets) targets.push_back({l, data.resources.at(l).vocab.size(), 0});
  MultiWayModel model(dims, sources, targets, tc.seed);
  for (auto& [lang, res] : data.resources) model.set_resources(lang, std::move(res));

  const std::string log_path = a.log.empty() ? a.out + ".log" : a.log;
  std::ofstream log_file(log_path);
  if (!log_file) throw InputError("cannot write log '" + log_path + "'");
  TrainLog log(log_file);
  log.config("profile", a.profile);
  if (!config_path.empty()) log.config("config", config_path);
  const KeyValueConfig dims_cfg = dims.to_config();
  for (const auto& [k, v] : dims_cfg.entries()) log.config("dims." + k, v);
  for (const auto& c : data.train) log.config("train." + c.pair_name(), std::to_string(c.size()));
  for (const auto& c : data.dev) log.config("dev." + c.pair_name(), std::to_string(c.size()));
  log.config("subsample", fmt_double(a.subsample));

  const TrainResult r = train(model, data.train, data.dev, tc, log);
  save_checkpoint(model, a.out);
  out << "trained " << r.updates << " updates; best mean dev BLEU " << fmt_double(r.best_bleu) << " at update "
      << r.best_update << '\n';
  if (a.finetune) {
    const TrainResult f = finetune(model, data.train, data.dev, tc, log);
    if (f.skipped) {
      out << "finetuning skipped: single-pair model\n";
    } else {
      save_checkpoint(model, a.out);
      out << "finetuned " << f.updates << " updates; best mean dev BLEU " << fmt_double(f.best_bleu) << '\n';
    }
  }
  out << "checkpoint written to " << a.out << '\n';
  return kExitOk;
}

// ---- translate / score -----------------------------------------------------

std::string available_pairs(const MultiWayModel& model) {
  std::string s;
  for (const auto& [src, tgt] : model.pairs()) s += (s.empty() ? "" : ", ") + src + ":" + tgt;
  return s;
}

void check_pair(const MultiWayModel& model, const std::string& src, const std::string& tgt) {
  if (!model.has_source(src) || !model.has_target(tgt)) {
    throw ConfigError("pair " + src + ":" + tgt + " is not in the checkpoint; available pairs: " +
                      available_pairs(model));
  }
}

const LanguageResources& resources_for(const MultiWayModel& model, const std::string& lang) {
  const LanguageResources* res = model.resources(lang);
  if (!res) throw ConfigError("checkpoint has no vocabulary for language '" + lang + "'");
  return *res;
}

Hypothesis decode_one(const MultiWayModel& model, std::span<const int> source, const std::string& src,
                      const std::string& tgt, int beam, int max_steps) {
  return beam == 1 ? greedy_decode(model, source, src, tgt, max_steps)
                   : beam_decode(model, source, src, tgt, beam, max_steps);
}

struct TranslateArgs {
  std::string model, pair, input = "-", output = "-";
  int beam = 12;
  int max_steps = 0;
};

void cmd_translate(const TranslateArgs& a, std::ostream& out) {
  if (a.beam < 1) throw UsageError("--beam must be at least 1");
  const auto [src, tgt] = parse_pair_names(a.pair);
  const MultiWayModel model = load_checkpoint(a.model);
  check_pair(model, src, tgt);
  const TextPipeline in_pipe = resources_for(model, src).pipeline();
  const TextPipeline out_pipe = resources_for(model, tgt).pipeline();
  const auto lines = read_input(a.input);
  Output dest(a.output, out);
  for (const auto& line : lines) {
    const auto ids = in_pipe.encode(line);
    if (ids.size() <= 1) {
      *dest << '\n';
      continue;
    }
    *dest << out_pipe.render(decode_one(model, ids, src, tgt, a.beam, a.max_steps).tokens) << '\n';
  }
}

struct ScoreArgs {
  std::string model, pair, source, reference, metric = "bleu";
  int beam = 12;
};

void cmd_score(const ScoreArgs& a, std::ostream& out) {
  if (a.beam < 1) throw UsageError("--beam must be at least 1");
  const auto [src, tgt] = parse_pair_names(a.pair);
  const MultiWayModel model = load_checkpoint(a.model);
  check_pair(model, src, tgt);
  const TextPipeline in_pipe = resources_for(model, src).pipeline();
  const TextPipeline out_pipe = resources_for(model, tgt).pipeline();
  if (a.metric == "bleu") {
    const auto sources = read_lines(a.source);
    const auto refs = read_lines(a.reference);
    if (sources.size() != refs.size()) {
      throw InputError("line count mismatch: " + a.source + " has " + std::to_string(sources.size()) + " lines, " +
                       a.reference + " has " + std::to_string(refs.size()));
    }
    std::vector<TokenSeq> hyp_words, ref_words;
    for (std::size_t i = 0; i < sources.size(); ++i) {
      const auto ids = in_pipe.encode(sources[i]);
      hyp_words.push_back(ids.size() <= 1 ? TokenSeq{}
                                          : out_pipe.words(decode_one(model, ids, src, tgt, a.beam, 0).tokens));
      ref_words.push_back(tokenize(refs[i]));
    }
    out << bleu(hyp_words, ref_words).to_string() << '\n';
  } else {
    const LoadReport r = load_parallel(a.source, a.reference, src, tgt, in_pipe, out_pipe,
                                       std::numeric_limits<int>::max());
    char buf[96];
    std::snprintf(buf, sizeof buf, "avg_logprob = %.6f (sentences=%zu)", avg_logprob(model, r.corpus),
                  r.corpus.size());
    out << buf << '\n';
  }
}

// ---- params ----------------------------------------------------------------

struct ParamsArgs {
  std::string model, profile = "desk", dims_file;
  int sources = 1, targets = 1, vocab = 2004;
};

void print_comparison(std::ostream& out, long multiway, long bank) {
  out << "multiway_total\t" << multiway << '\n';
  out << "pairwise_bank_total\t" << bank << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", static_cast<double>(bank) / static_cast<double>(multiway));
  out << "bank_to_multiway_ratio\t" << buf << '\n';
}

void cmd_params(const ParamsArgs& a, std::ostream& out) {
  if (!a.model.empty()) {
    const MultiWayModel model = load_checkpoint(a.model);
    const ParamCensus c = census(model);
    out << "component\tparameters\n";
    for (const auto& [name, n] : c.components) out << name << '\t' << n << '\n';
    for (const auto& [lang, n] : c.encoders) out << "encoder " << lang << '\t' << n << '\n';
    for (const auto& [lang, n] : c.decoders) out << "decoder " << lang << '\t' << n << '\n';
    out << "shared\t" << c.shared << '\n';
    const long n = static_cast<long>(c.encoders.size()), m = static_cast<long>(c.decoders.size());
    print_comparison(out, c.total, m * c.encoder_total() + n * c.decoder_total() + n * m * c.shared);
    return;
  }
  if (a.sources < 1 || a.targets < 1) throw ConfigError("--sources and --targets must be positive");
  ModelDims dims = profile_dims(a.profile);
  if (!a.dims_file.empty()) dims = ModelDims::from_config(KeyValueConfig::load(a.dims_file), dims);
  dims.validate();
  out << "component\tparameters\n";
  out << "encoder (each)\t" << predicted_encoder(dims, a.vocab) << '\n';
  out << "decoder (each)\t" << predicted_decoder(dims, a.vocab) << '\n';
  out << "shared\t" << predicted_shared(dims) << '\n';
  print_comparison(out, predicted_multiway(a.sources, a.targets, dims, a.vocab),
                   predicted_pairwise_total(a.sources, a.targets, dims, a.vocab));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-way, multilingual attention-based translation"};
  app.name("mwnmt");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  BpeLearnArgs bl;
  auto* learn = app.add_subcommand("bpe-learn", "Learn a BPE merge table from a text file");
  learn->add_option("--input", bl.input, "Training text, one sentence per line ('-' for stdin)")->required();
  learn->add_option("--merges", bl.merges, "Maximum number of merges");
  learn->add_option("--min-count", bl.min_count, "Stop when the best pair occurs fewer times than this");
  learn->add_option("--lang", bl.lang, "Language tag recorded with the table");
  learn->add_option("--out", bl.out, "Merge table output path ('-' for stdout)")->required();

  BpeApplyArgs ba;
  auto* apply = app.add_subcommand("bpe-apply", "Segment text with a merge table");
  apply->add_option("--input", ba.input, "Text to segment ('-' for stdin)")->required();
  apply->add_option("--codes", ba.codes, "Merge table from bpe-learn")->required();
  apply->add_option("--out", ba.out, "Output path ('-' for stdout)");

  BpeUndoArgs bu;
  auto* undo = app.add_subcommand("bpe-undo", "Merge segmented text back into words");
  undo->add_option("--input", bu.input, "Segmented text ('-' for stdin)")->required();
  undo->add_option("--out", bu.out, "Output path ('-' for stdout)");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train a multi-way model");
  tr->add_option("--pair", ta.pairs, "Training pair SRC:TGT:src_file:tgt_file (repeatable)")->expected(1)->take_all();
  tr->add_option("--dev", ta.dev, "Development pair SRC:TGT:src_file:tgt_file (repeatable)")->expected(1)->take_all();
  tr->add_option("--synthetic", ta.synthetic, "Synthetic task spec file instead of --pair");
  tr->add_option("--synthetic-dev", ta.synthetic_dev, "Dev sentences generated per synthetic pair");
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--log", ta.log, "Training log path (default: <out>.log)");
  tr->add_option("--profile", ta.profile, kProfileHelp)->check(CLI::IsMember({"desk", "paper"}));
  tr->add_option("--dims", ta.dims_file, "Dimension key=value file overriding the profile");
  tr->add_option("--config", ta.config_file,
                 std::string("Key=value file with dims and training settings (default: $") + kConfigEnv + ")");
  tr->add_option("--bpe-merges", ta.bpe_merges, "Merges learned per language; 0 keeps whole words");
  tr->add_option("--bpe-min-count", ta.bpe_min_count, "Minimum pair count for a merge");
  tr->add_option("--bpe", ta.bpe_files, "Use an existing merge table LANG:FILE (repeatable)")->expected(1)->take_all();
  tr->add_option("--vocab-size", ta.vocab_size, "Subword vocabulary size per language, reserved symbols excluded");
  tr->add_option("--subsample", ta.subsample, "Keep this fraction of the selected training pairs");
  tr->add_option("--subsample-pair", ta.subsample_pairs, "Pair SRC:TGT to subsample (repeatable; default all)")
      ->expected(1)
      ->take_all();
  tr->add_flag("--finetune", ta.finetune, "Finetune shared components and decoder output layers afterwards");
  tr->add_option("--lr", ta.flags.lr, "Adam learning rate");
  tr->add_option("--batch", ta.flags.batch_size, "Minibatch size");
  tr->add_option("--max-len", ta.flags.max_len, "Drop training pairs longer than this many symbols");
  tr->add_option("--clip", ta.flags.clip_norm, "Gradient norm clip during training");
  tr->add_option("--finetune-clip", ta.flags.finetune_clip_norm, "Gradient norm clip during finetuning");
  tr->add_option("--seed", ta.flags.seed, "Random seed");
  tr->add_option("--patience", ta.flags.patience, "Evaluations without improvement before stopping");
  tr->add_option("--eval-interval", ta.flags.eval_interval, "Updates between dev evaluations");
  tr->add_option("--max-updates", ta.flags.max_updates, "Hard cap on updates");
  tr->add_option("--threads", ta.flags.eval_threads, "Worker threads for dev decoding");

  TranslateArgs tl;
  auto* tra = app.add_subcommand("translate", "Translate sentences with a checkpoint");
  tra->add_option("--model", tl.model, "Checkpoint path")->required();
  tra->add_option("--pair", tl.pair, "Direction SRC:TGT")->required();
  tra->add_option("--input", tl.input, "Source sentences ('-' for stdin)");
  tra->add_option("--output", tl.output, "Translations ('-' for stdout)");
  tra->add_option("--beam", tl.beam, "Beam width; 1 is greedy");
  tra->add_option("--max-steps", tl.max_steps, "Maximum output symbols; 0 means 2 * source length + 5");

  ScoreArgs sc;
  auto* sco = app.add_subcommand("score", "Score a checkpoint on a parallel test set");
  sco->add_option("--model", sc.model, "Checkpoint path")->required();
  sco->add_option("--pair", sc.pair, "Direction SRC:TGT")->required();
  sco->add_option("--source", sc.source, "Source sentences")->required();
  sco->add_option("--reference", sc.reference, "Reference translations")->required();
  sco->add_option("--metric", sc.metric, "bleu or logprob")->check(CLI::IsMember({"bleu", "logprob"}));
  sco->add_option("--beam", sc.beam, "Beam width for bleu; 1 is greedy");

  ParamsArgs pa;
  auto* par = app.add_subcommand("params", "Parameter census and multiway vs. pairwise comparison");
  par->add_option("--model", pa.model, "Checkpoint to count; otherwise counts are predicted from dims");
  par->add_option("--sources", pa.sources, "Number of source languages N");
  par->add_option("--targets", pa.targets, "Number of target languages M");
  par->add_option("--vocab", pa.vocab, "Vocabulary size per language, reserved symbols included");
  par->add_option("--profile", pa.profile, kProfileHelp)->check(CLI::IsMember({"desk", "paper"}));
  par->add_option("--dims", pa.dims_file, "Dimension key=value file overriding the profile");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << (app.got_subcommand(learn)   ? learn->help()
            : app.got_subcommand(apply) ? apply->help()
            : app.got_subcommand(undo)  ? undo->help()
            : app.got_subcommand(tr)    ? tr->help()
            : app.got_subcommand(tra)   ? tra->help()
            : app.got_subcommand(sco)   ? sco->help()
            : app.got_subcommand(par)   ? par->help()
                                        : app.help());
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (app.got_subcommand(learn)) cmd_bpe_learn(bl, out);
    if (app.got_subcommand(apply)) cmd_bpe_apply(ba, out);
    if (app.got_subcommand(undo)) cmd_bpe_undo(bu, out);
    if (app.got_subcommand(tr)) return cmd_train(ta, *tr, out, err);
    if (app.got_subcommand(tra)) cmd_translate(tl, out);
    if (app.got_subcommand(sco)) cmd_score(sc, out);
    if (app.got_subcommand(par)) cmd_params(pa, out);
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ChecksumError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const VersionError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const IndexError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const DomainError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace mwnmt
