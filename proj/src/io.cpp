#include "zood/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fixture_data.hpp"
#include "zood/error.hpp"

namespace zood {
namespace {

constexpr char kMagic[4] = {'Z', 'O', 'O', 'D'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 2 + 4 * 4;

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view bytes, std::size_t offset) {
  unsigned char raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw Error(Errc::IoError, "read failed on '" + path.string() + "'");
  return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "write failed on '" + path.string() + "'");
}

bool has_csv_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".csv";
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(Errc::InvalidArgument,
                "line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'");
  }
  return value;
}

void append_double(std::string& out, double value) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

// Splits text into lines, dropping a trailing CR and a final empty line.
std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  for (auto& line : lines) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

}  // namespace

std::string encode_binary(const FeatureBundle& bundle) {
  bundle.validate();
  const auto n = static_cast<std::uint32_t>(bundle.rows());
  const auto d = static_cast<std::uint32_t>(bundle.width());
  std::string out;
  out.reserve(kHeaderSize + 8ULL * n + 8ULL * n * d);
  out.append(kMagic, 4);
  put_le<std::uint16_t>(out, kVersion);
  put_le<std::uint32_t>(out, n);
  put_le<std::uint32_t>(out, d);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.class_count));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.domain_count));
  for (std::uint32_t i = 0; i < n; ++i) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.domains[i]));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(bundle.labels[i]));
  }
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < d; ++j) put_le<double>(out, bundle.features(i, j));
  }
  return out;
}

FeatureBundle decode_binary(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(Errc::BadMagic, "missing ZOOD magic bytes");
  }
  if (bytes.size() < kHeaderSize) throw Error(Errc::TruncatedFile, "header is incomplete");
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kVersion) throw Error(Errc::VersionUnsupported, "format version " + std::to_string(version));
  const std::uint64_t n = get_le<std::uint32_t>(bytes, 6);
  const std::uint64_t d = get_le<std::uint32_t>(bytes, 10);
  const std::uint32_t classes = get_le<std::uint32_t>(bytes, 14);
  const std::uint32_t domains = get_le<std::uint32_t>(bytes, 18);
  const std::uint64_t expected = kHeaderSize + 8 * n + 8 * n * d;
  if (bytes.size() < expected) {
    throw Error(Errc::TruncatedFile,
                "expected " + std::to_string(expected) + " bytes, found " + std::to_string(bytes.size()));
  }
  if (bytes.size() > expected) throw Error(Errc::IoError, "trailing bytes after feature block");

  FeatureBundle b;
  b.class_count = static_cast<int>(classes);
  b.domain_count = static_cast<int>(domains);
  b.labels.resize(static_cast<Eigen::Index>(n));
  b.domains.resize(static_cast<Eigen::Index>(n));
  std::size_t offset = kHeaderSize;
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t dom = get_le<std::uint32_t>(bytes, offset);
    const std::uint32_t lab = get_le<std::uint32_t>(bytes, offset + 4);
    offset += 8;
    if (dom >= domains || lab >= classes) {
      throw Error(Errc::RangeViolation, "row " + std::to_string(i) + ": domain/label outside declared range");
    }
    b.domains[static_cast<Eigen::Index>(i)] = static_cast<int>(dom);
    b.labels[static_cast<Eigen::Index>(i)] = static_cast<int>(lab);
  }
  b.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::uint64_t i = 0; i < n; ++i) {
    for (std::uint64_t j = 0; j < d; ++j) {
      b.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = get_le<double>(bytes, offset);
      offset += 8;
    }
  }
  if (!b.features.allFinite()) throw Error(Errc::NonFinite, "feature block contains non-finite values");
  return b;
}

std::string encode_csv(const FeatureBundle& bundle) {
  bundle.validate();
  std::string out = "domain,label";
  for (Eigen::Index j = 0; j < bundle.width(); ++j) out += ",f" + std::to_string(j);
  out += '\n';
  for (Eigen::Index i = 0; i < bundle.rows(); ++i) {
    out += std::to_string(bundle.domains[i]);
    out += ',';
    out += std::to_string(bundle.labels[i]);
    for (Eigen::Index j = 0; j < bundle.width(); ++j) {
      out += ',';
      append_double(out, bundle.features(i, j));
    }
    out += '\n';
  }
  return out;
}

FeatureBundle decode_csv(std::string_view text) {
  const auto lines = lines_of(text);
  if (lines.empty()) throw Error(Errc::InvalidArgument, "CSV bundle has no header");
  const auto header = split(lines[0], ',');
  if (header.size() < 2 || header[0] != "domain" || header[1] != "label") {
    throw Error(Errc::InvalidArgument, "CSV header must start with 'domain,label'");
  }
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j) {
    if (header[j + 2] != "f" + std::to_string(j)) {
      throw Error(Errc::InvalidArgument, "CSV header column " + std::to_string(j + 2) + " must be f" +
                                             std::to_string(j));
    }
  }
  const std::size_t n = lines.size() - 1;
  FeatureBundle b;
  b.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  b.labels.resize(static_cast<Eigen::Index>(n));
  b.domains.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = split(lines[i + 1], ',');
    if (fields.size() != d + 2) {
      throw Error(Errc::InvalidArgument, "line " + std::to_string(i + 2) + ": expected " +
                                             std::to_string(d + 2) + " fields");
    }
    const auto row = static_cast<Eigen::Index>(i);
    b.domains[row] = parse_number<int>(fields[0], i + 2);
    b.labels[row] = parse_number<int>(fields[1], i + 2);
    if (b.domains[row] < 0 || b.labels[row] < 0) {
      throw Error(Errc::RangeViolation, "line " + std::to_string(i + 2) + ": negative domain or label");
    }
    for (std::size_t j = 0; j < d; ++j) {
      b.features(row, static_cast<Eigen::Index>(j)) = parse_number<double>(fields[j + 2], i + 2);
    }
  }
  b.class_count = n > 0 ? b.labels.maxCoeff() + 1 : 0;
  b.domain_count = n > 0 ? b.domains.maxCoeff() + 1 : 0;
  if (!b.features.allFinite()) throw Error(Errc::NonFinite, "CSV contains non-finite features");
  return b;
}

FeatureBundle read_bundle(const std::filesystem::path& path, BundleEncoding encoding) {
  const std::string bytes = read_file(path);
  if (encoding == BundleEncoding::Auto) {
    const bool magic = bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0;
    encoding = (magic || !has_csv_extension(path)) ? BundleEncoding::Binary : BundleEncoding::Csv;
  }
  try {
    return encoding == BundleEncoding::Binary ? decode_binary(bytes) : decode_csv(bytes);
  } catch (const Error& e) {
    throw e.with_context("'" + path.string() + "': ");
  }
}

void write_bundle(const FeatureBundle& bundle, const std::filesystem::path& path, BundleEncoding encoding) {
  if (encoding == BundleEncoding::Auto) {
    encoding = has_csv_extension(path) ? BundleEncoding::Csv : BundleEncoding::Binary;
  }
  write_file(path, encoding == BundleEncoding::Binary ? encode_binary(bundle) : encode_csv(bundle));
}

void ZooManifest::validate() const {
  if (models.empty()) throw Error(Errc::InvalidArgument, "manifest lists no models");
  std::set<std::string> ids, paths;
  for (const auto& m : models) {
    if (m.model_id.empty()) throw Error(Errc::InvalidArgument, "manifest entry with empty model_id");
    if (!ids.insert(m.model_id).second) throw Error(Errc::InvalidArgument, "duplicate model_id '" + m.model_id + "'");
    if (!paths.insert(m.path).second) throw Error(Errc::InvalidArgument, "duplicate path '" + m.path + "'");
  }
  if (class_count < 1 || domain_count < 1) {
    throw Error(Errc::InvalidArgument, "class_count and domain_count must be positive");
  }
  if (!domain_names.empty() && static_cast<int>(domain_names.size()) != domain_count) {
    throw Error(Errc::InvalidArgument, "domain_names length != domain_count");
  }
}

ZooManifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::IoError, "'" + path.string() + "' is not valid JSON: " + e.what());
  }
  ZooManifest m;
  try {
    m.dataset_name = doc.at("dataset_name").get<std::string>();
    m.class_count = doc.at("class_count").get<int>();
    m.domain_count = doc.at("domain_count").get<int>();
    if (doc.contains("domain_names")) m.domain_names = doc.at("domain_names").get<std::vector<std::string>>();
    for (const auto& entry : doc.at("models")) {
      m.models.push_back({entry.at("model_id").get<std::string>(), entry.at("path").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidArgument, "manifest '" + path.string() + "': " + e.what());
  }
  m.validate();
  return m;
}

void write_manifest(const ZooManifest& manifest, const std::filesystem::path& path) {
  manifest.validate();
  nlohmann::json doc;
  doc["dataset_name"] = manifest.dataset_name;
  doc["class_count"] = manifest.class_count;
  doc["domain_count"] = manifest.domain_count;
  doc["domain_names"] = manifest.domain_names;
  doc["models"] = nlohmann::json::array();
  for (const auto& m : manifest.models) doc["models"].push_back({{"model_id", m.model_id}, {"path", m.path}});
  write_file(path, doc.dump(2) + "\n");
}

std::vector<FeatureBundle> load_zoo(const ZooManifest& manifest, const std::filesystem::path& manifest_dir) {
  manifest.validate();
  std::vector<FeatureBundle> zoo;
  for (const auto& entry : manifest.models) {
    std::filesystem::path p(entry.path);
    if (p.is_relative()) p = manifest_dir / p;
    FeatureBundle b;
    try {
      b = read_bundle(p);
    } catch (const Error& e) {
      throw e.with_context("model '" + entry.model_id + "': ");
    }
    if (b.rows() > 0 && (b.labels.maxCoeff() >= manifest.class_count || b.domains.maxCoeff() >= manifest.domain_count)) {
      throw Error(Errc::RangeViolation, "model '" + entry.model_id + "': labels/domains exceed manifest counts");
    }
    b.model_id = entry.model_id;
    b.class_count = manifest.class_count;
    b.domain_count = manifest.domain_count;
    if (!zoo.empty() && !same_samples(zoo.front(), b)) {
      throw Error(Errc::InconsistentBundles, "model '" + entry.model_id + "': labels/domains differ from '" +
                                                 zoo.front().model_id + "'");
    }
    zoo.push_back(std::move(b));
  }
  return zoo;
}

std::string_view to_string(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::Leep: return "leep";
    case ScoreMethod::Nce: return "nce";
    case ScoreMethod::HScore: return "hscore";
    case ScoreMethod::Knn: return "knn";
    case ScoreMethod::LogMe: return "logme";
    case ScoreMethod::Zood: return "zood";
  }
  return "unknown";
}

ScoreMethod parse_method(std::string_view name) {
  for (auto m : {ScoreMethod::Leep, ScoreMethod::Nce, ScoreMethod::HScore, ScoreMethod::Knn, ScoreMethod::LogMe,
                 ScoreMethod::Zood}) {
    if (to_string(m) == name) return m;
  }
  throw Error(Errc::UnknownMethod, "'" + std::string(name) + "' (expected leep, nce, hscore, knn, logme, zood)");
}

std::optional<double> FixtureRow::score(ScoreMethod method) const {
  switch (method) {
    case ScoreMethod::Leep: return leep;
    case ScoreMethod::Nce: return nce;
    case ScoreMethod::HScore: return hscore;
    case ScoreMethod::Knn: return knn;
    case ScoreMethod::LogMe: return logme;
    case ScoreMethod::Zood: return zood;
  }
  return std::nullopt;
}

const FixtureRow& FixtureTable::model(int model_number) const {
  for (const auto& row : rows) {
    if (row.model_number == model_number) return row;
  }
  throw Error(Errc::InvalidArgument, "fixture '" + dataset_name + "' has no model " + std::to_string(model_number));
}

const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& f : detail::embedded_fixtures()) out.emplace_back(f.name);
    return out;
  }();
  return names;
}

FixtureTable load_fixture(std::string_view dataset_name) {
  for (const auto& f : detail::embedded_fixtures()) {
    if (dataset_name != f.name) continue;
    const auto lines = lines_of(f.csv);
    FixtureTable table;
    table.dataset_name = f.name;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const auto fields = split(lines[i], ',');
      if (fields.size() != 8) throw Error(Errc::InvalidArgument, "fixture row with wrong field count");
      auto cell = [&](std::size_t k) -> std::optional<double> {
        if (fields[k].empty()) return std::nullopt;
        return parse_number<double>(fields[k], i + 1);
      };
      FixtureRow row;
      row.model_number = parse_number<int>(fields[0], i + 1);
      row.leep = cell(1);
      row.nce = cell(2);
      row.hscore = cell(3);
      row.knn = cell(4);
      row.logme = cell(5);
      row.zood = cell(6);
      row.accuracy = parse_number<double>(fields[7], i + 1);
      table.rows.push_back(row);
    }
    return table;
  }
  throw Error(Errc::UnknownDataset, "'" + std::string(dataset_name) + "'");
}

}  // namespace zood
