#include "sic/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace sic {

using json = nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(trim(cur));
  return out;
}

double parse_number(const std::string& cell, Index row, const std::string& col) {
  char* end = nullptr;
  double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v))
    throw DataError("row " + std::to_string(row) + ", column " + col + ": non-numeric value \"" +
                    cell + "\"");
  return v;
}

std::string manifest_path(const std::string& path) { return path + ".manifest.json"; }

json manifest_to_json(const Manifest& m) {
  return json{{"source", m.source},
              {"family", family_name(m.family)},
              {"alpha", m.alpha},
              {"beta", m.beta},
              {"regime", regime_name(m.regime)},
              {"signal_strength", m.signal_strength},
              {"censoring_scale", m.censoring_scale},
              {"admin_quantile", m.admin_quantile},
              {"seed", m.seed},
              {"n_rows", m.n_rows},
              {"n_features", m.n_features}};
}

Manifest manifest_from_json(const json& j) {
  Manifest m;
  m.source = j.at("source").get<std::string>();
  m.family = family_from_name(j.at("family").get<std::string>());
  m.alpha = j.at("alpha").get<double>();
  m.beta = j.at("beta").get<double>();
  m.regime = regime_from_name(j.at("regime").get<std::string>());
  m.signal_strength = j.at("signal_strength").get<double>();
  m.censoring_scale = j.at("censoring_scale").get<double>();
  m.admin_quantile = j.at("admin_quantile").get<double>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.n_rows = j.at("n_rows").get<Index>();
  m.n_features = j.at("n_features").get<Index>();
  return m;
}

}  // namespace

void write_dataset(const SurvivalDataset& ds, const std::string& path) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.precision(17);
  for (Index j = 0; j < ds.features(); ++j) out << 'x' << j << ',';
  out << "time,event\n";
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < ds.features(); ++j) out << ds.X(i, j) << ',';
    out << ds.time[i] << ',' << ds.event[i] << '\n';
  }
  if (!out) throw DataError("write failed: " + path);

  std::ofstream mout(manifest_path(path));
  if (!mout) throw DataError("cannot open for writing: " + manifest_path(path));
  mout << manifest_to_json(ds.manifest).dump(2) << '\n';
}

SurvivalDataset read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 3 || header[header.size() - 2] != "time" || header.back() != "event")
    throw DataError(path + ": malformed header, expected x0..x{d-1},time,event");
  const Index d = static_cast<Index>(header.size()) - 2;
  for (Index j = 0; j < d; ++j)
    if (header[static_cast<std::size_t>(j)] != "x" + std::to_string(j))
      throw DataError(path + ": malformed header, expected column x" + std::to_string(j) +
                      " but found " + header[static_cast<std::size_t>(j)]);

  std::vector<std::vector<double>> rows;
  Index row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row_no) + ": expected " +
                      std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    std::vector<double> vals;
    vals.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      vals.push_back(parse_number(cells[c], row_no, header[c]));
    double t = vals[static_cast<std::size_t>(d)];
    double e = vals[static_cast<std::size_t>(d) + 1];
    if (!(t > 0.0))
      throw DataError("row " + std::to_string(row_no) + ", column time: must be > 0, got " +
                      std::to_string(t));
    if (e != 0.0 && e != 1.0)
      throw DataError("row " + std::to_string(row_no) + ", column event: must be 0 or 1, got " +
                      cells[static_cast<std::size_t>(d) + 1]);
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");

  SurvivalDataset ds;
  const Index n = static_cast<Index>(rows.size());
  ds.X.resize(n, d);
  ds.time.resize(n);
  ds.event.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Index j = 0; j < d; ++j) ds.X(i, j) = r[static_cast<std::size_t>(j)];
    ds.time[i] = r[static_cast<std::size_t>(d)];
    ds.event[i] = static_cast<int>(r[static_cast<std::size_t>(d) + 1]);
  }

  std::ifstream min(manifest_path(path));
  if (min) {
    try {
      ds.manifest = manifest_from_json(json::parse(min));
    } catch (const std::exception& e) {
      throw DataError(manifest_path(path) + ": malformed manifest: " + e.what());
    }
  } else {
    ds.manifest.source = "unknown";
  }
  ds.manifest.n_rows = n;
  ds.manifest.n_features = d;
  return ds;
}

// ---------------------------------------------------------------------------
// schema-driven ingestion

void DatasetSchema::validate() const {
  if (features.empty()) throw ConfigError("schema: no feature columns");
  if (time_column.empty() || event_column.empty())
    throw ConfigError("schema: time and event columns are required");
  if (time_column == event_column)
    throw ConfigError("schema: time and event columns must be distinct");
  std::set<std::string> seen;
  for (const auto& f : features) {
    if (f.name == time_column || f.name == event_column)
      throw ConfigError("schema: feature column " + f.name + " collides with time/event");
    if (!seen.insert(f.name).second)
      throw ConfigError("schema: duplicate feature column " + f.name);
  }
}

DatasetSchema schema_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed schema JSON: " + e.what());
  }
  DatasetSchema s;
  try {
    for (const auto& col : j.at("features")) {
      SchemaColumn sc;
      sc.name = col.at("name").get<std::string>();
      std::string kind = col.at("kind").get<std::string>();
      if (kind == "numeric")
        sc.kind = ColumnKind::Numeric;
      else if (kind == "categorical")
        sc.kind = ColumnKind::Categorical;
      else
        throw DataError(path + ": unknown column kind " + kind);
      s.features.push_back(sc);
    }
    s.time_column = j.at("time").get<std::string>();
    s.event_column = j.at("event").get<std::string>();
    if (j.contains("encoding")) {
      std::string enc = j.at("encoding").get<std::string>();
      if (enc == "one_hot")
        s.encoding = CategoricalEncoding::OneHot;
      else if (enc == "ordinal")
        s.encoding = CategoricalEncoding::Ordinal;
      else
        throw DataError(path + ": unknown encoding " + enc);
    }
    if (j.contains("missing_markers"))
      s.missing_markers = j.at("missing_markers").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(path + ": malformed schema JSON: " + e.what());
  }
  s.validate();
  return s;
}

int CategoryMap::code_of(const std::string& value) const {
  auto it = std::lower_bound(categories.begin(), categories.end(), value);
  if (it != categories.end() && *it == value)
    return static_cast<int>(it - categories.begin());
  return other_code();
}

SurvivalDataset ingest_real(const std::string& path, const DatasetSchema& schema,
                            IngestReport* report) {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  std::vector<std::string> header = split_csv_line(line);

  auto col_index = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError(path + ": declared column " + name + " not in file");
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> feat_idx;
  for (const auto& f : schema.features) feat_idx.push_back(col_index(f.name));
  std::size_t time_idx = col_index(schema.time_column);
  std::size_t event_idx = col_index(schema.event_column);

  auto is_missing = [&](const std::string& cell) {
    return std::find(schema.missing_markers.begin(), schema.missing_markers.end(), cell) !=
           schema.missing_markers.end();
  };

  std::vector<std::vector<std::string>> raw;
  Index row_no = 0;
  while (std::getline(in, line)) {
    ++row_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw DataError("row " + std::to_string(row_no) + ": expected " +
                      std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    raw.push_back(std::move(cells));
  }
  if (raw.empty()) throw DataError(path + ": no data rows");

  // first pass: categories per categorical column, in sorted order
  std::vector<CategoryMap> maps(schema.features.size());
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    if (schema.features[f].kind != ColumnKind::Categorical) continue;
    std::set<std::string> cats;
    for (const auto& r : raw)
      if (!is_missing(r[feat_idx[f]])) cats.insert(r[feat_idx[f]]);
    maps[f].categories.assign(cats.begin(), cats.end());
  }

  std::vector<std::string> out_names;
  std::vector<Index> out_offset(schema.features.size());
  Index d = 0;
  for (std::size_t f = 0; f < schema.features.size(); ++f) {
    out_offset[f] = d;
    const auto& sc = schema.features[f];
    if (sc.kind == ColumnKind::Numeric ||
        schema.encoding == CategoricalEncoding::Ordinal) {
      out_names.push_back(sc.name);
      ++d;
    } else {
      for (const auto& c : maps[f].categories) {
        out_names.push_back(sc.name + "=" + c);
        ++d;
      }
      if (maps[f].categories.empty())
        throw DataError(path + ": categorical column " + sc.name + " has no observed values");
    }
  }

  const Index n = static_cast<Index>(raw.size());
  SurvivalDataset ds;
  ds.X = Mat::Zero(n, d);
  ds.time.resize(n);
  ds.event.resize(n);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (Index i = 0; i < n; ++i) {
    const auto& r = raw[static_cast<std::size_t>(i)];
    Index row_id = i + 1;
    for (std::size_t f = 0; f < schema.features.size(); ++f) {
      const auto& sc = schema.features[f];
      const std::string& cell = r[feat_idx[f]];
      if (sc.kind == ColumnKind::Numeric) {
        ds.X(i, out_offset[f]) = is_missing(cell) ? nan : parse_number(cell, row_id, sc.name);
      } else if (schema.encoding == CategoricalEncoding::Ordinal) {
        ds.X(i, out_offset[f]) =
            is_missing(cell) ? maps[f].other_code() : maps[f].code_of(cell);
      } else {
        if (!is_missing(cell)) {
          int code = maps[f].code_of(cell);
          if (code < maps[f].other_code()) ds.X(i, out_offset[f] + code) = 1.0;
          // "other" leaves the all-zero row
        }
      }
    }
    const std::string& tc = r[time_idx];
    double t = parse_number(tc, row_id, schema.time_column);
    if (!(t > 0.0))
      throw DataError("row " + std::to_string(row_id) + ", column " + schema.time_column +
                      ": must be > 0, got " + tc);
    const std::string& ec = r[event_idx];
    double e = parse_number(ec, row_id, schema.event_column);
    if (e != 0.0 && e != 1.0)
      throw DataError("row " + std::to_string(row_id) + ", column " + schema.event_column +
                      ": must be 0 or 1, got " + ec);
    ds.time[i] = t;
    ds.event[i] = static_cast<int>(e);
  }

  ds.manifest.source = "real";
  ds.manifest.n_rows = n;
  ds.manifest.n_features = d;
  if (report) {
    report->n_rows = n;
    report->n_input_columns = static_cast<Index>(header.size());
    report->feature_names = out_names;
    report->category_maps.clear();  // categorical source columns only
    for (std::size_t f = 0; f < schema.features.size(); ++f)
      if (schema.features[f].kind == ColumnKind::Categorical)
        report->category_maps.push_back(maps[f]);
  }
  return ds;
}

}  // namespace sic
