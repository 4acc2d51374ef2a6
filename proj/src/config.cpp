#include "resfcn/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "resfcn/errors.hpp"

namespace resfcn {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool starts_with_ci(const std::string& s, const std::string& prefix) {
  return lower(s).rfind(prefix, 0) == 0;
}

RowKind parse_kind(const std::string& raw, const std::string& row) {
  const std::string v = lower(raw);
  if (v == "conv3x3") return RowKind::kConv3x3;
  if (v == "conv1x1") return RowKind::kConv1x1;
  if (v == "simple") return RowKind::kSimple;
  if (v == "basic") return RowKind::kBasic;
  if (v == "bottleneck") return RowKind::kBottleneck;
  throw ConfigError("row " + row + ": unknown block type '" + raw + "'");
}

PathRole parse_role(const std::string& raw, const std::string& row) {
  const std::string v = lower(raw);
  if (v == "contracting") return PathRole::kContracting;
  if (v == "across") return PathRole::kAcross;
  if (v == "expanding") return PathRole::kExpanding;
  if (v == "classifier") return PathRole::kClassifier;
  throw ConfigError("row " + row + ": unknown path '" + raw + "'");
}

PathRole infer_role(const std::string& name) {
  if (starts_with_ci(name, "down")) return PathRole::kContracting;
  if (starts_with_ci(name, "across")) return PathRole::kAcross;
  if (starts_with_ci(name, "up")) return PathRole::kExpanding;
  if (starts_with_ci(name, "classifier")) return PathRole::kClassifier;
  throw ConfigError("row " + name + ": cannot infer path from the name; set path = ...");
}

Resolution parse_resolution(const std::string& raw, const std::string& where) {
  const auto x = lower(raw).find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument("no separator");
    std::size_t used = 0;
    const std::string hs = raw.substr(0, x), ws = raw.substr(x + 1);
    const long h = std::stol(hs, &used);
    if (used != hs.size()) throw std::invalid_argument("trailing");
    const long w = std::stol(ws, &used);
    if (used != ws.size()) throw std::invalid_argument("trailing");
    if (h <= 0 || w <= 0) throw std::invalid_argument("non-positive");
    return {static_cast<std::size_t>(h), static_cast<std::size_t>(w)};
  } catch (const std::exception&) {
    throw ConfigError(where + ": resolution must look like 64x64, got '" + raw + "'");
  }
}

bool parse_bool(const std::string& raw, const std::string& where) {
  const std::string v = lower(raw);
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(where + ": expected a boolean, got '" + raw + "'");
}

std::size_t parse_count(const std::string& raw, const std::string& where) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (ec != std::errc() || ptr != raw.data() + raw.size() || v == 0) {
    throw ConfigError(where + ": expected a positive integer, got '" + raw + "'");
  }
  return v;
}

double parse_real(const std::string& raw, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where + ": expected a number, got '" + raw + "'");
  }
}

std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const boost::property_tree::ptree* find_child(const boost::property_tree::ptree& tree,
                                              const std::string& key) {
  auto it = tree.find(key);
  return it == tree.not_found() ? nullptr : &it->second;
}

}  // namespace

std::string to_string(Resolution r) {
  return std::to_string(r.height) + "x" + std::to_string(r.width);
}

const char* to_string(RowKind k) {
  switch (k) {
    case RowKind::kConv3x3: return "conv3x3";
    case RowKind::kConv1x1: return "conv1x1";
    case RowKind::kSimple: return "simple";
    case RowKind::kBasic: return "basic";
    case RowKind::kBottleneck: return "bottleneck";
  }
  return "?";
}

const char* to_string(PathRole r) {
  switch (r) {
    case PathRole::kContracting: return "contracting";
    case PathRole::kAcross: return "across";
    case PathRole::kExpanding: return "expanding";
    case PathRole::kClassifier: return "classifier";
  }
  return "?";
}

const char* to_string(SkipVariant v) {
  switch (v) {
    case SkipVariant::kLongAndShort: return "long+short";
    case SkipVariant::kShortOnly: return "short-only";
    case SkipVariant::kLongOnly: return "long-only";
    case SkipVariant::kNone: return "none";
  }
  return "?";
}

NetworkConfig with_skips(NetworkConfig cfg, SkipVariant v) {
  cfg.long_skips = v == SkipVariant::kLongAndShort || v == SkipVariant::kLongOnly;
  cfg.short_skips = v == SkipVariant::kLongAndShort || v == SkipVariant::kShortOnly;
  return cfg;
}

Resolution row_input_resolution(const NetworkConfig& cfg, std::size_t row) {
  return row == 0 ? cfg.input_resolution : cfg.rows.at(row - 1).out_resolution;
}

std::size_t row_input_width(const NetworkConfig& cfg, std::size_t row) {
  return row == 0 ? cfg.input_channels : cfg.rows.at(row - 1).out_width;
}

Resample row_resample(const NetworkConfig& cfg, std::size_t row) {
  const Resolution in = row_input_resolution(cfg, row);
  const Resolution out = cfg.rows.at(row).out_resolution;
  if (in == out) return Resample::kNone;
  if (in.height == 2 * out.height && in.width == 2 * out.width) return Resample::kDown;
  if (out.height == 2 * in.height && out.width == 2 * in.width) return Resample::kUp;
  throw ConfigError("row " + cfg.rows[row].name + ": resolution changes from " + to_string(in) +
                    " to " + to_string(out) + "; rows may only halve, keep or double it");
}

int long_skip_source(const NetworkConfig& cfg, std::size_t row) {
  if (!cfg.long_skips || cfg.rows.at(row).role != PathRole::kExpanding) return -1;
  const Resolution in = row_input_resolution(cfg, row);
  int found = -1;
  for (std::size_t j = 0; j < row; ++j) {
    if (cfg.rows[j].role == PathRole::kContracting && cfg.rows[j].out_resolution == in) {
      found = static_cast<int>(j);
    }
  }
  if (found < 0) {
    std::string nearest = "none";
    for (std::size_t j = 0; j < row; ++j) {
      if (cfg.rows[j].role == PathRole::kContracting) {
        nearest = cfg.rows[j].name + " (" + to_string(cfg.rows[j].out_resolution) + ")";
      }
    }
    throw ConfigError("long skip: expanding row " + cfg.rows[row].name + " takes input at " +
                      to_string(in) + " but no contracting row matches; last contracting row is " +
                      nearest);
  }
  return found;
}

void validate(const NetworkConfig& cfg) {
  if (cfg.rows.empty()) throw ConfigError("network config has no rows");
  if (cfg.input_channels == 0) throw ConfigError("input_channels must be positive");
  if (cfg.input_resolution.height == 0 || cfg.input_resolution.width == 0) {
    throw ConfigError("input_resolution must be positive");
  }
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) {
    throw ConfigError("dropout must lie in [0, 1), got " + format_real(cfg.dropout_rate));
  }
  std::vector<std::string> names;
  int last_role = -1;
  for (std::size_t i = 0; i < cfg.rows.size(); ++i) {
    const ArchRow& r = cfg.rows[i];
    if (r.name.empty()) throw ConfigError("row " + std::to_string(i) + " has no name");
    if (std::find(names.begin(), names.end(), r.name) != names.end()) {
      throw ConfigError("duplicate row name " + r.name);
    }
    names.push_back(r.name);
    if (r.out_width == 0 || r.repetitions == 0) {
      throw ConfigError("row " + r.name + ": width and repetitions must be positive");
    }
    if (static_cast<int>(r.role) < last_role) {
      throw ConfigError("row " + r.name + ": path order must be contracting, across, expanding, classifier");
    }
    last_role = static_cast<int>(r.role);
    if (r.role == PathRole::kClassifier && i + 1 != cfg.rows.size()) {
      throw ConfigError("row " + r.name + ": classifier must be the last row");
    }
    if (r.kind == RowKind::kBottleneck && r.out_width % 4 != 0) {
      throw ConfigError("row " + r.name + ": bottleneck width " + std::to_string(r.out_width) +
                        " is not divisible by 4");
    }
    row_resample(cfg, i);
    long_skip_source(cfg, i);
  }
  const ArchRow& last = cfg.rows.back();
  if (last.role != PathRole::kClassifier || last.kind != RowKind::kConv1x1 || last.out_width != 1 ||
      last.repetitions != 1) {
    throw ConfigError("the last row must be a classifier conv1x1 of width 1, got " + last.name);
  }
}

NetworkConfig parse_network_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("network config: ") + e.what());
  }

  NetworkConfig cfg;
  bool have_global = false;
  for (const auto& [section, body] : tree) {
    if (lower(section) == "network") {
      have_global = true;
      for (const auto& [key, value] : body) {
        const std::string v = value.get_value<std::string>();
        const std::string where = "[network] " + key;
        if (key == "input_channels") cfg.input_channels = parse_count(v, where);
        else if (key == "input_resolution") cfg.input_resolution = parse_resolution(v, where);
        else if (key == "long_skips") cfg.long_skips = parse_bool(v, where);
        else if (key == "short_skips") cfg.short_skips = parse_bool(v, where);
        else if (key == "batch_norm") cfg.use_batch_norm = parse_bool(v, where);
        else if (key == "dropout") cfg.dropout_rate = parse_real(v, where);
        else throw ConfigError("unknown key " + where);
      }
      continue;
    }
    if (!starts_with_ci(section, "row ")) {
      throw ConfigError("unknown section [" + section + "]; expected [network] or [row NAME]");
    }
    ArchRow row;
    row.name = section.substr(4);
    row.name.erase(0, row.name.find_first_not_of(' '));
    bool have_role = false;
    for (const auto& [key, value] : body) {
      const std::string v = value.get_value<std::string>();
      const std::string where = "[row " + row.name + "] " + key;
      if (key == "block") row.kind = parse_kind(v, row.name);
      else if (key == "resolution") row.out_resolution = parse_resolution(v, where);
      else if (key == "width") row.out_width = parse_count(v, where);
      else if (key == "repetitions") row.repetitions = parse_count(v, where);
      else if (key == "path") { row.role = parse_role(v, row.name); have_role = true; }
      else throw ConfigError("unknown key " + where);
    }
    for (const char* required : {"block", "resolution", "width"}) {
      if (!find_child(body, required)) {
        throw ConfigError("[row " + row.name + "] is missing '" + required + "'");
      }
    }
    if (!have_role) row.role = infer_role(row.name);
    cfg.rows.push_back(row);
  }
  if (!have_global) throw ConfigError("network config has no [network] section");
  validate(cfg);
  return cfg;
}

NetworkConfig parse_network_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_network_config(in);
}

NetworkConfig load_network_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open network config " + path);
  return parse_network_config(in);
}

std::string to_config_text(const NetworkConfig& cfg) {
  std::ostringstream os;
  os << "[network]\n"
     << "input_channels = " << cfg.input_channels << "\n"
     << "input_resolution = " << to_string(cfg.input_resolution) << "\n"
     << "long_skips = " << (cfg.long_skips ? "true" : "false") << "\n"
     << "short_skips = " << (cfg.short_skips ? "true" : "false") << "\n"
     << "batch_norm = " << (cfg.use_batch_norm ? "true" : "false") << "\n"
     << "dropout = " << format_real(cfg.dropout_rate) << "\n";
  for (const ArchRow& r : cfg.rows) {
    os << "\n[row " << r.name << "]\n"
       << "block = " << to_string(r.kind) << "\n"
       << "resolution = " << to_string(r.out_resolution) << "\n"
       << "width = " << r.out_width << "\n"
       << "repetitions = " << r.repetitions << "\n"
       << "path = " << to_string(r.role) << "\n";
  }
  return os.str();
}

}  // namespace resfcn
