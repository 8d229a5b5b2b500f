#include "hypocert/config.hpp"

#include "hypocert/errors.hpp"
#include "hypocert/model.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <cstdlib>

namespace hypocert {

namespace {

const std::vector<Stage> kStages = {Stage::Assumptions, Stage::Certify, Stage::Operators, Stage::Semigroup,
                                    Stage::Sde};

// Parsed right-hand side of `key = value`.
struct Value {
  enum class Kind { String, Integer, Float, Bool, Array } kind = Kind::String;
  std::string text;  // string contents or the numeric literal
  bool boolean = false;
  std::vector<Value> items;
};

struct Entry {
  Value value;
  int line = 0;
};

[[noreturn]] void fail(int line, const std::string& message) {
  throw ConfigError(line > 0 ? "line " + std::to_string(line) + ": " + message : message);
}

class LineParser {
 public:
  LineParser(const std::string& text, int line) : s_(text), line_(line) {}

  void skip_space() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_space();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  std::string key() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
                                s_[pos_] == '-'))
      ++pos_;
    if (pos_ == start) fail(line_, "expected a key");
    return s_.substr(start, pos_ - start);
  }

  void expect(char c) {
    skip_space();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(line_, std::string("expected '") + c + "'");
    ++pos_;
  }

  Value value() {
    skip_space();
    if (pos_ >= s_.size()) fail(line_, "missing value");
    const char c = s_[pos_];
    if (c == '"') return string();
    if (c == '[') return array();
    if (s_.compare(pos_, 4, "true") == 0) {
      pos_ += 4;
      Value v;
      v.kind = Value::Kind::Bool;
      v.boolean = true;
      return v;
    }
    if (s_.compare(pos_, 5, "false") == 0) {
      pos_ += 5;
      Value v;
      v.kind = Value::Kind::Bool;
      return v;
    }
    return number();
  }

 private:
  Value string() {
    ++pos_;
    Value v;
    while (true) {
      if (pos_ >= s_.size()) fail(line_, "unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        v.text += c;
        continue;
      }
      if (pos_ >= s_.size()) fail(line_, "unterminated escape");
      switch (s_[pos_++]) {
        case '"': v.text += '"'; break;
        case '\\': v.text += '\\'; break;
        case 'n': v.text += '\n'; break;
        case 't': v.text += '\t'; break;
        default: fail(line_, "unsupported escape sequence");
      }
    }
    return v;
  }

  Value array() {
    ++pos_;
    Value v;
    v.kind = Value::Kind::Array;
    skip_space();
    if (pos_ < s_.size() && s_[pos_] == ']') {
      ++pos_;
      return v;
    }
    while (true) {
      Value item = value();
      if (item.kind == Value::Kind::Array) fail(line_, "nested arrays are not supported");
      v.items.push_back(std::move(item));
      skip_space();
      if (pos_ >= s_.size()) fail(line_, "unterminated array");
      if (s_[pos_] == ']') {
        ++pos_;
        return v;
      }
      if (s_[pos_] != ',') fail(line_, "expected ',' or ']' in array");
      ++pos_;
      skip_space();
      if (pos_ < s_.size() && s_[pos_] == ']') {
        ++pos_;
        return v;
      }
    }
  }

  Value number() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.' ||
                                s_[pos_] == '+' || s_[pos_] == '-' || s_[pos_] == '_'))
      ++pos_;
    std::string literal = s_.substr(start, pos_ - start);
    literal.erase(std::remove(literal.begin(), literal.end(), '_'), literal.end());
    if (literal.empty()) fail(line_, "expected a value");
    Value v;
    v.text = literal;
    const bool is_float = literal.find_first_of(".eE") != std::string::npos || literal == "inf" ||
                          literal == "+inf" || literal == "-inf" || literal == "nan";
    v.kind = is_float ? Value::Kind::Float : Value::Kind::Integer;
    return v;
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_;
};

using Table = std::map<std::string, std::map<std::string, Entry>>;

Table parse_tables(const std::string& text) {
  Table tables;
  tables[""];
  std::string section;
  std::set<std::string> headers;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    LineParser p(raw, line);
    if (p.at_end_or_comment()) continue;
    p.skip_space();
    if (raw.find_first_not_of(" \t") != std::string::npos && raw[raw.find_first_not_of(" \t")] == '[') {
      p.expect('[');
      section = p.key();
      p.expect(']');
      if (!p.at_end_or_comment()) fail(line, "trailing characters after section header");
      if (!headers.insert(section).second) fail(line, "duplicate section [" + section + "]");
      tables[section];
      continue;
    }
    const std::string key = p.key();
    p.expect('=');
    Value value = p.value();
    if (!p.at_end_or_comment()) fail(line, "trailing characters after value of '" + key + "'");
    auto& table = tables[section];
    if (table.count(key)) fail(line, "duplicate key '" + key + "'");
    table[key] = Entry{std::move(value), line};
  }
  return tables;
}

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

double as_double(const Entry& e, const std::string& name) {
  if (e.value.kind != Value::Kind::Float && e.value.kind != Value::Kind::Integer)
    fail(e.line, "'" + name + "' must be a number");
  double out = 0.0;
  const auto& t = e.value.text;
  const char* first = t.data() + (t.size() > 0 && t[0] == '+' ? 1 : 0);
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size()) fail(e.line, "'" + name + "': malformed number " + t);
  if (!std::isfinite(out)) fail(e.line, "'" + name + "' must be finite");
  return out;
}

long long as_integer(const Entry& e, const std::string& name) {
  if (e.value.kind != Value::Kind::Integer) fail(e.line, "'" + name + "' must be an integer");
  long long out = 0;
  const auto& t = e.value.text;
  const char* first = t.data() + (t.size() > 0 && t[0] == '+' ? 1 : 0);
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size()) fail(e.line, "'" + name + "': malformed integer " + t);
  return out;
}

std::uint64_t as_unsigned(const Entry& e, const std::string& name) {
  if (e.value.kind != Value::Kind::Integer) fail(e.line, "'" + name + "' must be an integer");
  std::uint64_t out = 0;
  const auto& t = e.value.text;
  const char* first = t.data() + (t.size() > 0 && t[0] == '+' ? 1 : 0);
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size())
    fail(e.line, "'" + name + "' must be a nonnegative integer, got " + t);
  return out;
}

int as_int(const Entry& e, const std::string& name) {
  const long long v = as_integer(e, name);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    fail(e.line, "'" + name + "' out of range");
  return static_cast<int>(v);
}

const std::string& as_string(const Entry& e, const std::string& name) {
  if (e.value.kind != Value::Kind::String) fail(e.line, "'" + name + "' must be a string");
  return e.value.text;
}

bool as_bool(const Entry& e, const std::string& name) {
  if (e.value.kind != Value::Kind::Bool) fail(e.line, "'" + name + "' must be true or false");
  return e.value.boolean;
}

// Shortest text that reads back to the same double and still looks like a float.
std::string format_double(double x) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  std::string s = buf;
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out + "\"";
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::Assumptions: return "assumptions";
    case Stage::Certify: return "certify";
    case Stage::Operators: return "operators";
    case Stage::Semigroup: return "semigroup";
    case Stage::Sde: return "sde";
  }
  return "unknown";
}

Stage parse_stage(const std::string& name) {
  for (Stage s : kStages)
    if (to_string(s) == name) return s;
  throw ConfigError("unknown stage '" + name + "' (expected assumptions, certify, operators, semigroup or sde)");
}

const std::vector<Stage>& all_stages() { return kStages; }

void ExperimentConfig::validate() const {
  const auto names = model_names();
  if (std::find(names.begin(), names.end(), model) == names.end())
    throw ConfigError("model.name: unknown model '" + model + "'");
  if (!(theta1 > 1.0)) throw ConfigError("certify.theta1 must be > 1, got " + format_double(theta1));
  if (!(c_phi >= 0.0)) throw ConfigError("certify.c_phi must be >= 0");
  if (c_sigma && !(*c_sigma > 0.0)) throw ConfigError("certify.c_sigma must be > 0");
  if (N_sigma && !(*N_sigma > 0.0)) throw ConfigError("certify.N_sigma must be > 0");
  if (lambda && !(*lambda > 0.0)) throw ConfigError("certify.lambda must be > 0");
  if (paths < 1) throw ConfigError("sde.paths must be >= 1");
  if (nx < 16 || nv < 16) throw ConfigError("grid.nx and grid.nv must be >= 16");
  if (!(t_end > 0.0) || !(dt > 0.0) || dt > t_end) throw ConfigError("time: need 0 < dt <= t_end");
  if (!(sde_dt > 0.0)) throw ConfigError("sde.dt must be > 0");
  if (!(burn_in >= 0.0)) throw ConfigError("sde.burn_in must be >= 0");
  if (!(max_lag >= 0.0)) throw ConfigError("sde.max_lag must be >= 0");
  if (!(covariation_time > 0.0)) throw ConfigError("sde.covariation_time must be > 0");
  if (test_functions < 1) throw ConfigError("operators.test_functions must be >= 1");
  if (threads < 1) throw ConfigError("run.threads must be >= 1");
  std::set<Stage> seen;
  for (Stage s : stages)
    if (!seen.insert(s).second) throw ConfigError("run.stages: duplicate stage '" + to_string(s) + "'");
  int dim = 1;
  try {
    dim = make_model(model, model_params).dim();
  } catch (const Error& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (integrator == Integrator::Milstein && dim != 1)
    throw ConfigError("sde.integrator: milstein is only available for d = 1 models");
}

ExperimentConfig parse_config(const std::string& text) {
  Table tables = parse_tables(text);
  ExperimentConfig c;

  // Consumes entries as they are read so that leftovers can be reported.
  auto take = [&](const std::string& section, const std::string& key) -> std::optional<Entry> {
    auto sit = tables.find(section);
    if (sit == tables.end()) return std::nullopt;
    auto kit = sit->second.find(key);
    if (kit == sit->second.end()) return std::nullopt;
    Entry e = kit->second;
    sit->second.erase(kit);
    return e;
  };

  auto schema = take("", "schema");
  if (!schema) throw ConfigError("missing schema key (expected schema = \"" + std::string(kConfigSchema) + "\")");
  if (as_string(*schema, "schema") != kConfigSchema)
    fail(schema->line, "unsupported schema '" + schema->value.text + "' (expected " + kConfigSchema + ")");

  if (auto e = take("model", "name")) c.model = as_string(*e, "model.name");
  if (auto it = tables.find("model"); it != tables.end()) {
    for (const auto& [key, entry] : it->second) c.model_params[key] = as_double(entry, "model." + key);
    it->second.clear();
  }

  if (auto e = take("grid", "nx")) c.nx = as_int(*e, "grid.nx");
  if (auto e = take("grid", "nv")) c.nv = as_int(*e, "grid.nv");

  if (auto e = take("time", "t_end")) c.t_end = as_double(*e, "time.t_end");
  if (auto e = take("time", "dt")) c.dt = as_double(*e, "time.dt");
  if (auto e = take("time", "scheme")) {
    try {
      c.scheme = parse_scheme(as_string(*e, "time.scheme"));
    } catch (const UsageError& err) {
      fail(e->line, err.what());
    }
  }

  if (auto e = take("operators", "test_functions")) c.test_functions = as_int(*e, "operators.test_functions");
  if (auto e = take("operators", "export")) c.export_operators = as_bool(*e, "operators.export");

  if (auto e = take("sde", "paths")) c.paths = as_unsigned(*e, "sde.paths");
  if (auto e = take("sde", "dt")) c.sde_dt = as_double(*e, "sde.dt");
  if (auto e = take("sde", "burn_in")) c.burn_in = as_double(*e, "sde.burn_in");
  if (auto e = take("sde", "seed")) c.seed = as_unsigned(*e, "sde.seed");
  if (auto e = take("sde", "integrator")) {
    try {
      c.integrator = parse_integrator(as_string(*e, "sde.integrator"));
    } catch (const UsageError& err) {
      fail(e->line, err.what());
    }
  }
  if (auto e = take("sde", "max_lag")) c.max_lag = as_double(*e, "sde.max_lag");
  if (auto e = take("sde", "covariation_time")) c.covariation_time = as_double(*e, "sde.covariation_time");

  if (auto e = take("certify", "theta1")) c.theta1 = as_double(*e, "certify.theta1");
  if (auto e = take("certify", "c_phi")) c.c_phi = as_double(*e, "certify.c_phi");
  if (auto e = take("certify", "c_sigma")) c.c_sigma = as_double(*e, "certify.c_sigma");
  if (auto e = take("certify", "N_sigma")) c.N_sigma = as_double(*e, "certify.N_sigma");
  if (auto e = take("certify", "lambda")) c.lambda = as_double(*e, "certify.lambda");

  if (auto e = take("run", "stages")) {
    if (e->value.kind != Value::Kind::Array) fail(e->line, "'run.stages' must be an array of strings");
    c.stages.clear();
    std::set<Stage> requested;
    for (const auto& item : e->value.items) {
      if (item.kind != Value::Kind::String) fail(e->line, "'run.stages' must be an array of strings");
      try {
        if (!requested.insert(parse_stage(item.text)).second) fail(e->line, "duplicate stage '" + item.text + "'");
      } catch (const ConfigError& err) {
        if (std::string(err.what()).rfind("line ", 0) == 0) throw;
        fail(e->line, err.what());
      }
    }
    for (Stage s : kStages)
      if (requested.count(s)) c.stages.push_back(s);
  }
  if (auto e = take("run", "threads")) c.threads = as_int(*e, "run.threads");
  if (auto e = take("run", "out")) c.out = as_string(*e, "run.out");

  for (const auto& [section, table] : tables) {
    static const std::set<std::string> known = {"", "model", "grid", "time", "operators", "sde", "certify", "run"};
    if (!known.count(section)) {
      int line = table.empty() ? 0 : table.begin()->second.line;
      fail(line, "unknown section [" + section + "]");
    }
    for (const auto& [key, entry] : table) fail(entry.line, "unknown key '" + where(section, key) + "'");
  }

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "schema = " << quote(kConfigSchema) << "\n";

  out << "\n[model]\nname = " << quote(c.model) << "\n";
  for (const auto& [key, value] : c.model_params) out << key << " = " << format_double(value) << "\n";

  out << "\n[grid]\nnx = " << c.nx << "\nnv = " << c.nv << "\n";

  out << "\n[time]\nt_end = " << format_double(c.t_end) << "\ndt = " << format_double(c.dt)
      << "\nscheme = " << quote(to_string(c.scheme)) << "\n";

  out << "\n[operators]\ntest_functions = " << c.test_functions
      << "\nexport = " << (c.export_operators ? "true" : "false") << "\n";

  out << "\n[sde]\npaths = " << c.paths << "\ndt = " << format_double(c.sde_dt)
      << "\nburn_in = " << format_double(c.burn_in) << "\nseed = " << c.seed
      << "\nintegrator = " << quote(to_string(c.integrator)) << "\nmax_lag = " << format_double(c.max_lag)
      << "\ncovariation_time = " << format_double(c.covariation_time) << "\n";

  out << "\n[certify]\ntheta1 = " << format_double(c.theta1) << "\nc_phi = " << format_double(c.c_phi) << "\n";
  if (c.c_sigma) out << "c_sigma = " << format_double(*c.c_sigma) << "\n";
  if (c.N_sigma) out << "N_sigma = " << format_double(*c.N_sigma) << "\n";
  if (c.lambda) out << "lambda = " << format_double(*c.lambda) << "\n";

  out << "\n[run]\nstages = [";
  for (std::size_t i = 0; i < c.stages.size(); ++i) out << (i ? ", " : "") << quote(to_string(c.stages[i]));
  out << "]\nthreads = " << c.threads << "\n";
  if (c.out) out << "out = " << quote(*c.out) << "\n";
  return out.str();
}

}  // namespace hypocert
