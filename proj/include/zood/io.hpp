#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zood/bundle.hpp"
#include "zood/error.hpp"

namespace zood {

enum class BundleEncoding { Auto, Binary, Csv };

// Auto picks CSV for a ".csv" extension and binary otherwise. Reading with Auto
// sniffs the magic bytes first.
FeatureBundle read_bundle(const std::filesystem::path& path, BundleEncoding encoding = BundleEncoding::Auto);
void write_bundle(const FeatureBundle& bundle, const std::filesystem::path& path,
                  BundleEncoding encoding = BundleEncoding::Auto);

std::string encode_binary(const FeatureBundle& bundle);
FeatureBundle decode_binary(std::string_view bytes);
std::string encode_csv(const FeatureBundle& bundle);
FeatureBundle decode_csv(std::string_view text);

struct ManifestEntry {
  std::string model_id;
  std::string path;  // relative paths resolve against the manifest's directory
};

struct ZooManifest {
  std::string dataset_name;
  std::vector<ManifestEntry> models;
  int class_count = 0;
  int domain_count = 0;
  std::vector<std::string> domain_names;

  void validate() const;
};

ZooManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const ZooManifest& manifest, const std::filesystem::path& path);

// Loads every bundle named by the manifest; model ids come from the manifest and
// class/domain counts are checked against it.
std::vector<FeatureBundle> load_zoo(const ZooManifest& manifest, const std::filesystem::path& manifest_dir);

enum class ScoreMethod { Leep, Nce, HScore, Knn, LogMe, Zood };

std::string_view to_string(ScoreMethod method);
ScoreMethod parse_method(std::string_view name);  // UnknownMethod

struct FixtureRow {
  int model_number = 0;
  std::optional<double> leep, nce, hscore, knn, logme, zood;
  double accuracy = 0.0;

  std::optional<double> score(ScoreMethod method) const;
};

struct FixtureTable {
  std::string dataset_name;
  std::vector<FixtureRow> rows;

  const FixtureRow& model(int model_number) const;
};

const std::vector<std::string>& fixture_names();
FixtureTable load_fixture(std::string_view dataset_name);  // UnknownDataset

}  // namespace zood
