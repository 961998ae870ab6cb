#include "mwnmt/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mwnmt/errors.hpp"

namespace mwnmt {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'W', 'N', 'M', 'T', 'C', 'K', '1'};

class Writer {
 public:
  template <typename T>
  void pod(T value) {
    char raw[sizeof(T)];
    std::memcpy(raw, &value, sizeof(T));
    buf_.append(raw, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void raw(const void* p, std::size_t n) { buf_.append(static_cast<const char*>(p), n); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }
  bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (n > end_ - pos_) throw InputError("checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::string& bytes, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(n)));
}

}  // namespace

std::string serialize_model(const MultiWayModel& model) {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.pod(kCheckpointVersion);

  const KeyValueConfig dims_cfg = model.dims().to_config();
  const auto& dims = dims_cfg.entries();
  w.pod(static_cast<std::uint32_t>(dims.size()));
  for (const auto& [k, v] : dims) {
    w.str(k);
    w.str(v);
  }
  w.pod(static_cast<std::uint32_t>(model.sources().size()));
  for (const auto& s : model.sources()) {
    w.str(s.name);
    w.pod(static_cast<std::int32_t>(s.vocab_size));
    w.pod(static_cast<std::int32_t>(s.hidden));
  }
  w.pod(static_cast<std::uint32_t>(model.targets().size()));
  for (const auto& t : model.targets()) {
    w.str(t.name);
    w.pod(static_cast<std::int32_t>(t.vocab_size));
  }

  const auto params = model.parameters();
  w.pod(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    w.pod(static_cast<std::uint32_t>(p.tensor.rank()));
    for (int d : p.tensor.shape()) w.pod(static_cast<std::int32_t>(d));
    const auto data = p.tensor.data();
    w.raw(data.data(), data.size_bytes());
  }

  const auto& resources = model.all_resources();
  std::uint32_t blocks = 0;
  for (const auto& [_, res] : resources) blocks += res.merges ? 2 : 1;
  w.pod(blocks);
  for (const auto& [lang, res] : resources) {
    std::ostringstream vocab;
    res.vocab.save(vocab);
    w.str("vocab/" + lang);
    w.str(vocab.str());
    if (res.merges) {
      std::ostringstream merges;
      save_merges(*res.merges, merges);
      w.str("bpe/" + lang);
      w.str(merges.str());
    }
  }

  w.pod(checksum(w.buffer(), w.buffer().size()));
  return std::move(w.buffer());
}

MultiWayModel deserialize_model(const std::string& bytes) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw InputError("not a model checkpoint (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  const std::uint32_t actual = checksum(bytes, body);
  if (stored != actual) {
    throw ChecksumError("checkpoint checksum mismatch (stored " + std::to_string(stored) + ", computed " +
                        std::to_string(actual) + ")");
  }

  Reader r(bytes, body);
  r.skip(sizeof kMagic);
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kCheckpointVersion) + ")");
  }

  KeyValueConfig dims_cfg;
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    std::string k = r.str();
    dims_cfg.set(std::move(k), r.str());
  }
  std::vector<LanguageSpec> sources, targets;
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    LanguageSpec s;
    s.name = r.str();
    s.vocab_size = r.pod<std::int32_t>();
    s.hidden = r.pod<std::int32_t>();
    sources.push_back(std::move(s));
  }
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    LanguageSpec t;
    t.name = r.str();
    t.vocab_size = r.pod<std::int32_t>();
    targets.push_back(std::move(t));
  }
  MultiWayModel model(ModelDims::from_config(dims_cfg), std::move(sources), std::move(targets), 0);

  auto params = model.parameters();
  const auto count = r.pod<std::uint32_t>();
  if (count != params.size()) {
    throw InputError("checkpoint holds " + std::to_string(count) + " parameter blocks, model layout expects " +
                     std::to_string(params.size()));
  }
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) throw InputError("checkpoint block '" + name + "' where '" + p.name + "' was expected");
    const auto rank = r.pod<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.pod<std::int32_t>();
    if (shape != p.tensor.shape()) {
      throw InputError("checkpoint block '" + name + "' has shape " + shape_str(shape) + ", expected " +
                       shape_str(p.tensor.shape()));
    }
    auto data = p.tensor.data_mut();
    r.raw(data.data(), data.size_bytes());
  }

  std::map<std::string, LanguageResources> resources;
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    const std::string name = r.str();
    std::istringstream text(r.str());
    const auto slash = name.find('/');
    if (slash == std::string::npos) throw InputError("malformed text block name '" + name + "'");
    const std::string kind = name.substr(0, slash), lang = name.substr(slash + 1);
    if (kind == "vocab") {
      resources[lang].vocab = Vocabulary::load(text, lang);
    } else if (kind == "bpe") {
      resources[lang].merges = load_merges(text, lang);
    } else {
      throw InputError("unknown text block '" + name + "'");
    }
  }
  for (auto& [lang, res] : resources) model.set_resources(lang, std::move(res));
  if (!r.done()) throw InputError("trailing bytes in checkpoint");
  return model;
}

void save_checkpoint(const MultiWayModel& model, const std::string& path) {
  const std::string bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

MultiWayModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace mwnmt
