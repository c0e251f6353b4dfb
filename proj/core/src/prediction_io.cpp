#include <fmt/format.h>

#include "gengap/binary_io.hpp"
#include "gengap/checkpoint.hpp"
#include "gengap/errors.hpp"
#include "gengap/metrics.hpp"

namespace gengap {

namespace {
constexpr char kMagic[] = "GGPM";
constexpr std::uint16_t kVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_predictions(const PredictionMatrix& m) {
  if (m.probs.size() != m.num_models() * m.num_points * m.num_classes) {
    throw ShapeError("prediction matrix size does not match its header");
  }
  binary::Writer w;
  w.put_bytes(std::string(kMagic, 4));
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(m.num_models()));
  w.put(static_cast<std::uint32_t>(m.num_points));
  w.put(static_cast<std::uint32_t>(m.num_classes));
  w.put_string(m.eval_set_id);
  for (const auto& l : m.lineage) {
    w.put_string(l.procedure);
    w.put(l.k);
    w.put(l.j);
    w.put(l.run_id);
  }
  for (double v : m.probs) w.put(v);
  return std::move(w.bytes());
}

PredictionMatrix decode_predictions(const std::vector<std::uint8_t>& bytes) {
  binary::Reader r(bytes.data(), bytes.size());
  if (r.get_bytes(4) != std::string(kMagic, 4)) {
    throw FormatError("not a prediction matrix: bad magic");
  }
  if (const auto v = r.get<std::uint16_t>(); v != kVersion) {
    throw FormatError(fmt::format("unsupported prediction matrix version {}", v));
  }
  PredictionMatrix m;
  const auto models = r.get<std::uint32_t>();
  m.num_points = r.get<std::uint32_t>();
  m.num_classes = r.get<std::uint32_t>();
  m.eval_set_id = r.get_string();
  for (std::uint32_t i = 0; i < models; ++i) {
    Lineage l;
    l.procedure = r.get_string();
    l.k = r.get<std::uint32_t>();
    l.j = r.get<std::uint32_t>();
    l.run_id = r.get<std::uint64_t>();
    m.lineage.push_back(std::move(l));
  }
  const std::size_t count =
      static_cast<std::size_t>(models) * m.num_points * m.num_classes;
  if (r.remaining() != count * 8) {
    throw FormatError("prediction matrix payload has the wrong length");
  }
  m.probs.resize(count);
  for (auto& v : m.probs) v = r.get<double>();
  return m;
}

void save_predictions(const std::filesystem::path& path,
                      const PredictionMatrix& m) {
  auto bytes = encode_predictions(m);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

PredictionMatrix load_predictions(const std::filesystem::path& path) {
  const auto s = read_file(path);
  return decode_predictions(std::vector<std::uint8_t>(s.begin(), s.end()));
}

}  // namespace gengap
