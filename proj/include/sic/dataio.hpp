#pragma once

// Dataset persistence (CSV + JSON manifest sidecar) and real-data ingestion
// driven by a column schema.

#include <optional>
#include <string>
#include <vector>

#include "sic/dataset.hpp"

namespace sic {

// CSV layout: header x0..x{d-1},time,event; one row per subject. A sidecar
// "<path>.manifest.json" records provenance; datasets without one still load.
void write_dataset(const SurvivalDataset& ds, const std::string& path);
SurvivalDataset read_dataset(const std::string& path);

enum class ColumnKind { Numeric, Categorical };
enum class CategoricalEncoding { OneHot, Ordinal };

struct SchemaColumn {
  std::string name;
  ColumnKind kind = ColumnKind::Numeric;
};

struct DatasetSchema {
  std::vector<SchemaColumn> features;
  std::string time_column;
  std::string event_column;
  CategoricalEncoding encoding = CategoricalEncoding::OneHot;
  // cell contents treated as missing; kept as NaN until CV-time imputation
  std::vector<std::string> missing_markers = {"", "NA", "NaN", "nan", "null", "?"};

  void validate() const;
};

DatasetSchema schema_from_json_file(const std::string& path);

// category string -> code, fixed for a run; unknown values map to the
// explicit "other" code n_categories (ordinal) / the all-zero row (one-hot)
struct CategoryMap {
  std::vector<std::string> categories;  // sorted, as seen at ingest time
  int code_of(const std::string& value) const;  // categories.size() = "other"
  int other_code() const { return static_cast<int>(categories.size()); }
};

struct IngestReport {
  Index n_rows = 0;
  Index n_input_columns = 0;
  std::vector<std::string> feature_names;  // expanded, post-encoding
  std::vector<CategoryMap> category_maps;  // per categorical source column
};

SurvivalDataset ingest_real(const std::string& path, const DatasetSchema& schema,
                            IngestReport* report = nullptr);

}  // namespace sic
