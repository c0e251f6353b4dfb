#include "gengap/checkpoint.hpp"

#include <atomic>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "gengap/binary_io.hpp"
#include "gengap/errors.hpp"

namespace gengap {

namespace {
constexpr char kMagic[] = "GGAP";
}

std::vector<std::uint8_t> encode_checkpoint(const Model& model) {
  binary::Writer w;
  w.put_bytes(std::string(kMagic, 4));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(model.spec.input_dim));
  w.put(static_cast<std::uint32_t>(model.spec.hidden.size()));
  for (const auto& h : model.spec.hidden) {
    w.put(static_cast<std::uint32_t>(h.width));
    w.put(static_cast<std::uint8_t>(h.activation));
  }
  w.put(static_cast<std::uint32_t>(model.spec.num_classes));
  w.put_string(model.lineage.procedure);
  w.put(model.lineage.k);
  w.put(model.lineage.j);
  w.put(model.lineage.run_id);
  w.put(static_cast<std::uint64_t>(model.params.size()));
  for (double v : model.params.values()) w.put(v);
  return std::move(w.bytes());
}

Model decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes.data(), bytes.size());
  if (r.get_bytes(4) != std::string(kMagic, 4)) {
    throw FormatError("not a checkpoint: bad magic");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {}", version));
  }
  Model m;
  m.spec.input_dim = r.get<std::uint32_t>();
  const auto hidden = r.get<std::uint32_t>();
  if (hidden > 1024) throw FormatError("implausible hidden layer count");
  for (std::uint32_t i = 0; i < hidden; ++i) {
    HiddenLayer h;
    h.width = r.get<std::uint32_t>();
    const auto act = r.get<std::uint8_t>();
    if (act > 1) throw FormatError("unknown activation code");
    h.activation = static_cast<Activation>(act);
    m.spec.hidden.push_back(h);
  }
  m.spec.num_classes = r.get<std::uint32_t>();
  try {
    m.spec.validate();
  } catch (const DomainError& e) {
    throw FormatError(fmt::format("checkpoint spec invalid: {}", e.what()));
  }
  m.lineage.procedure = r.get_string();
  m.lineage.k = r.get<std::uint32_t>();
  m.lineage.j = r.get<std::uint32_t>();
  m.lineage.run_id = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (count != m.spec.param_count() || r.remaining() != count * 8) {
    throw FormatError("checkpoint parameter count does not match its spec");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = r.get<double>();
  m.params = ParamVector(m.spec.layout(), std::move(values));
  return m;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& bytes) {
  static std::atomic<std::uint64_t> counter{0};
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  auto tmp = path;
  tmp += fmt::format(".tmp{}", counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(fmt::format("cannot write {}", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(fmt::format("write failed for {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  auto bytes = encode_checkpoint(model);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Model load_checkpoint(const std::filesystem::path& path) {
  const auto s = read_file(path);
  return decode_checkpoint(std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace gengap
