#include "boxcap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace boxcap::net {
namespace {

constexpr char kMagic[8] = {'B', 'O', 'X', 'C', 'A', 'P', 'C', 'K'};
constexpr std::uint64_t kMaxString = std::uint64_t(1) << 32;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  template <class T>
  void pod(const T& v) {
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void tensors(const std::vector<NamedTensor>& ts) {
    pod<std::uint64_t>(ts.size());
    for (const NamedTensor& t : ts) {
      str(t.name);
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.value.rows()));
      pod<std::uint64_t>(static_cast<std::uint64_t>(t.value.cols()));
      os_.write(reinterpret_cast<const char*>(t.value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.value.size())));
    }
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  Reader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  template <class T>
  T pod() {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is_) fail("truncated file");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > kMaxString) fail("corrupt string length");
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (!is_) fail("truncated file");
    return s;
  }
  std::vector<NamedTensor> tensors() {
    const auto n = pod<std::uint64_t>();
    if (n > 1'000'000) fail("corrupt tensor count");
    std::vector<NamedTensor> out;
    for (std::uint64_t i = 0; i < n; ++i) {
      NamedTensor t;
      t.name = str();
      const auto r = pod<std::uint64_t>(), c = pod<std::uint64_t>();
      if (r > (1u << 28) || c > (1u << 28) || r * c > (std::uint64_t(1) << 31)) fail("corrupt tensor shape for " + t.name);
      t.value.resize(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      is_.read(reinterpret_cast<char*>(t.value.data()),
               static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(t.value.size())));
      if (!is_) fail("truncated file");
      out.push_back(std::move(t));
    }
    return out;
  }
  [[noreturn]] void fail(const std::string& why) { throw CheckpointError(what_ + ": " + why); }

 private:
  std::istream& is_;
  std::string what_;
};

std::string map_to_text(const std::map<std::string, std::string>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

std::map<std::string, std::string> text_to_map(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write checkpoint " + tmp.string());
    Writer w(os);
    os.write(kMagic, sizeof(kMagic));
    w.pod(kCheckpointVersion);
    w.str(map_to_text(ckpt.model.to_map()));
    w.str(map_to_text(ckpt.train));
    w.pod<std::uint64_t>(ckpt.vocab.size());
    for (const std::string& t : ckpt.vocab) w.str(t);
    w.pod(ckpt.step);
    w.str(ckpt.rng_state);
    w.tensors(ckpt.params);
    w.tensors(ckpt.adam_m);
    w.tensors(ckpt.adam_v);
    if (!os) throw CheckpointError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  Reader r(is, "checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) r.fail("not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion)
    r.fail("unsupported version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  try {
    c.model = ModelConfig::from_map(text_to_map(r.str()));
  } catch (const std::invalid_argument& e) {
    r.fail(e.what());
  }
  c.train = text_to_map(r.str());
  const auto nv = r.pod<std::uint64_t>();
  if (nv > 10'000'000) r.fail("corrupt vocabulary size");
  for (std::uint64_t i = 0; i < nv; ++i) c.vocab.push_back(r.str());
  c.step = r.pod<std::uint64_t>();
  c.rng_state = r.str();
  c.params = r.tensors();
  c.adam_m = r.tensors();
  c.adam_v = r.tensors();
  if (static_cast<int>(c.vocab.size()) != c.model.vocab)
    r.fail("vocabulary has " + std::to_string(c.vocab.size()) + " entries, config says " + std::to_string(c.model.vocab));
  return c;
}

std::vector<NamedTensor> export_parameters(const CaptionModel& model) {
  std::vector<NamedTensor> out;
  for (const Parameter* p : model.parameters()) out.push_back({p->name, p->value});
  return out;
}

void import_parameters(CaptionModel& model, const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Matrix*> by_name;
  for (const NamedTensor& t : tensors) by_name[t.name] = &t.value;
  for (Parameter* p : model.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing parameter '" + p->name + "'");
    const Matrix& v = *it->second;
    if (v.rows() != p->value.rows() || v.cols() != p->value.cols())
      throw CheckpointError("parameter '" + p->name + "' has shape " + std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols()) + ", model expects " + std::to_string(p->value.rows()) +
                            "x" + std::to_string(p->value.cols()));
    p->value = v;
    p->zero_grad();
  }
  if (by_name.size() != model.parameters().size())
    throw CheckpointError("checkpoint has parameters the model does not define");
}

}  // namespace boxcap::net
