#include "psqn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "psqn/libsvm.hpp"

namespace psqn {

ConfigError::ConfigError(const std::string& msg, std::size_t line)
    : std::runtime_error(line ? "config line " + std::to_string(line) + ": " + msg
                              : "config: " + msg),
      line_(line) {}

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool valid_key(const std::string& key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '.';
    if (!ok) return false;
  }
  return key.find("..") == std::string::npos;
}

bool valid_name(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_')) return false;
  }
  return true;
}

std::map<std::string, Entry> read_entries(std::istream& in) {
  std::map<std::string, Entry> entries;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected `key = value`", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!valid_key(key)) throw ConfigError("malformed key '" + key + "'", line_no);
    if (value.empty()) throw ConfigError("empty value for '" + key + "'", line_no);
    auto [it, inserted] = entries.emplace(key, Entry{value, line_no});
    if (!inserted) {
      throw ConfigError("duplicate key '" + key + "' (first set on line " +
                            std::to_string(it->second.line) + ")",
                        line_no);
    }
  }
  return entries;
}

double parse_double(const std::string& key, const Entry& e) {
  double v = 0.0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ConfigError("'" + key + "' expects a finite number, got '" + e.value + "'", e.line);
  }
  return v;
}

template <typename Int>
Int parse_integer(const std::string& key, const Entry& e) {
  Int v = 0;
  const char* first = e.value.data();
  const char* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("'" + key + "' expects a non-negative integer, got '" + e.value + "'",
                      e.line);
  }
  return v;
}

bool parse_bool(const std::string& key, const Entry& e) {
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + e.value + "'", e.line);
}

Loss parse_loss(const std::string& key, const Entry& e) {
  if (e.value == "squared") return Loss::SquaredError;
  if (e.value == "logistic") return Loss::LogisticRidge;
  throw ConfigError("'" + key + "' expects squared or logistic, got '" + e.value + "'", e.line);
}

SamplingKind parse_sampling(const std::string& key, const Entry& e) {
  for (SamplingKind k : {SamplingKind::UniformBatch, SamplingKind::WeightedSingle,
                         SamplingKind::WeightedReplacement}) {
    if (e.value == to_string(k)) return k;
  }
  throw ConfigError("'" + key + "' expects uniform, weighted_single or weighted_replacement", e.line);
}

// Returns true when the key was a data.synthetic.* key.
bool apply_synthetic_key(SyntheticSpec& spec, const std::string& key, const Entry& e) {
  static const std::string prefix = "data.synthetic.";
  if (key.rfind(prefix, 0) != 0) return false;
  const std::string field = key.substr(prefix.size());
  if (field == "n") spec.n = parse_integer<std::size_t>(key, e);
  else if (field == "d") spec.d = parse_integer<std::size_t>(key, e);
  else if (field == "density") spec.density = parse_double(key, e);
  else if (field == "condition") spec.condition = parse_double(key, e);
  else if (field == "noise") spec.noise = parse_double(key, e);
  else if (field == "seed") spec.seed = parse_integer<std::uint64_t>(key, e);
  else throw ConfigError("unknown key '" + key + "'", e.line);
  return true;
}

void apply_solver_key(NamedSolver& s, const std::string& field, const std::string& key,
                      const Entry& e) {
  SolverConfig& c = s.config;
  if (field == "kind") {
    const auto kind = solver_kind_from_string(e.value);
    if (!kind) throw ConfigError("unknown solver kind '" + e.value + "'", e.line);
    c.kind = *kind;
  } else if (field == "epochs") {
    c.epochs = parse_integer<std::size_t>(key, e);
  } else if (field == "inner_loop") {
    c.inner_loop = parse_integer<std::size_t>(key, e);
  } else if (field == "eta") {
    if (e.value == "auto") {
      s.eta_auto = true;
    } else {
      c.eta = parse_double(key, e);
    }
  } else if (field == "batch") {
    c.batch = parse_integer<std::size_t>(key, e);
  } else if (field == "hessian_batch") {
    c.hessian_batch = parse_integer<std::size_t>(key, e);
  } else if (field == "metric_period") {
    c.metric_period = parse_integer<std::size_t>(key, e);
  } else if (field == "alpha") {
    c.alpha = parse_double(key, e);
  } else if (field == "skip_eps") {
    c.skip_eps = parse_double(key, e);
  } else if (field == "sampling") {
    c.sampling = parse_sampling(key, e);
  } else if (field == "seed") {
    c.seed = parse_integer<std::uint64_t>(key, e);
  } else if (field == "force_identity_metric") {
    c.force_identity_metric = parse_bool(key, e);
  } else if (field == "step_decay") {
    c.step_decay = parse_double(key, e);
  } else if (field == "divergence_factor") {
    c.divergence_factor = parse_double(key, e);
  } else if (field == "dense_limit") {
    c.dense_limit = parse_integer<std::size_t>(key, e);
  } else {
    throw ConfigError("unknown key '" + key + "'", e.line);
  }
}

std::vector<std::string> split_list(const std::string& value, std::size_t line) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!valid_name(item)) {
      throw ConfigError("solver names use [a-z0-9_], got '" + item + "'", line);
    }
    out.push_back(item);
  }
  if (!value.empty() && value.back() == ',') throw ConfigError("trailing comma in solvers", line);
  return out;
}

}  // namespace

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (c.data_path.has_value() == c.synthetic.has_value()) {
    fail("set exactly one of data.path and data.synthetic.*");
  }
  if (c.data_path && c.data_path->empty()) fail("data.path is empty");
  if (c.synthetic) {
    try {
      validate(*c.synthetic);
    } catch (const std::invalid_argument& ex) {
      fail(ex.what());
    }
    if (c.synthetic->loss != c.loss) fail("synthetic loss must equal model.loss");
  }
  if (!(c.ridge >= 0.0) || !std::isfinite(c.ridge)) fail("model.ridge must be finite and >= 0");
  if (!(c.l1 >= 0.0) || !std::isfinite(c.l1)) fail("model.l1 must be finite and >= 0");
  if (!(c.reference_tol > 0.0) || !std::isfinite(c.reference_tol)) {
    fail("reference.tol must be finite and > 0");
  }
  if (c.output_dir.empty()) fail("output.dir is empty");
  if (!valid_name(c.output_prefix)) fail("output.prefix uses [a-z0-9_]");
  if (c.solvers.empty()) fail("at least one solver is required");
  std::set<std::string> names;
  for (const auto& s : c.solvers) {
    const std::string where = "solver '" + s.name + "': ";
    if (!valid_name(s.name)) fail(where + "malformed name");
    if (!names.insert(s.name).second) fail(where + "listed twice");
    const SolverConfig& sc = s.config;
    if (sc.epochs == 0) fail(where + "epochs must be >= 1");
    if (s.eta_auto && sc.eta) fail(where + "eta is both auto and fixed");
    if (s.eta_auto && sc.kind != SolverKind::ProxSQN && sc.kind != SolverKind::ProxSVRG) {
      fail(where + "eta = auto needs prox_sqn or prox_svrg");
    }
    if (sc.eta && !(*sc.eta > 0.0)) fail(where + "eta must be > 0");
    if (sc.batch == 0) fail(where + "batch must be >= 1");
    if (sc.hessian_batch == 0) fail(where + "hessian_batch must be >= 1");
    if (sc.metric_period == 0) fail(where + "metric_period must be >= 1");
    if (!(sc.alpha > 0.0 && sc.alpha < 1.0)) fail(where + "alpha must lie in (0, 1)");
    if (!(sc.skip_eps >= 0.0)) fail(where + "skip_eps must be >= 0");
    if (!(sc.step_decay >= 0.0)) fail(where + "step_decay must be >= 0");
    if (sc.step_decay != 0.0 && sc.kind != SolverKind::ProxSVRG) {
      fail(where + "step_decay is only available for prox_svrg");
    }
    if (!(sc.divergence_factor > 1.0)) fail(where + "divergence_factor must be > 1");
    if (sc.sampling == SamplingKind::WeightedSingle && sc.batch != 1) {
      fail(where + "weighted_single sampling requires batch = 1");
    }
  }
}

ExperimentConfig parse_experiment_config(std::istream& in) {
  const auto entries = read_entries(in);
  ExperimentConfig c;

  const auto list = entries.find("solvers");
  if (list == entries.end()) throw ConfigError("missing key 'solvers'");
  for (const auto& name : split_list(list->second.value, list->second.line)) {
    NamedSolver s;
    s.name = name;
    if (const auto kind = solver_kind_from_string(name)) s.config.kind = *kind;
    c.solvers.push_back(std::move(s));
  }

  SyntheticSpec spec;
  bool synthetic = false;
  std::set<std::string> kinds_set;
  for (const auto& [key, e] : entries) {
    if (key == "solvers") continue;
    if (apply_synthetic_key(spec, key, e)) {
      synthetic = true;
    } else if (key == "data.path") {
      c.data_path = e.value;
    } else if (key == "model.loss") {
      c.loss = parse_loss(key, e);
    } else if (key == "model.ridge") {
      c.ridge = parse_double(key, e);
    } else if (key == "model.l1") {
      c.l1 = parse_double(key, e);
    } else if (key == "reference.enabled") {
      c.reference = parse_bool(key, e);
    } else if (key == "reference.tol") {
      c.reference_tol = parse_double(key, e);
    } else if (key == "output.dir") {
      c.output_dir = e.value;
    } else if (key == "output.prefix") {
      c.output_prefix = e.value;
    } else if (key.rfind("solver.", 0) == 0) {
      const std::string rest = key.substr(7);
      const auto dot = rest.find('.');
      if (dot == std::string::npos) throw ConfigError("unknown key '" + key + "'", e.line);
      const std::string name = rest.substr(0, dot);
      auto it = std::find_if(c.solvers.begin(), c.solvers.end(),
                             [&](const NamedSolver& s) { return s.name == name; });
      if (it == c.solvers.end()) {
        throw ConfigError("solver '" + name + "' is not listed in 'solvers'", e.line);
      }
      const std::string field = rest.substr(dot + 1);
      apply_solver_key(*it, field, key, e);
      if (field == "kind") kinds_set.insert(name);
    } else {
      throw ConfigError("unknown key '" + key + "'", e.line);
    }
  }
  for (const auto& s : c.solvers) {
    if (!solver_kind_from_string(s.name) && !kinds_set.count(s.name)) {
      throw ConfigError("solver '" + s.name + "' needs solver." + s.name + ".kind");
    }
  }
  if (synthetic) {
    spec.loss = c.loss;
    c.synthetic = spec;
  }
  validate(c);
  return c;
}

ExperimentConfig read_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config '" + path + "'");
  return parse_experiment_config(in);
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream out;
  const auto num = [](double v) { return format_double(v); };
  if (c.data_path) out << "data.path = " << *c.data_path << "\n";
  if (c.synthetic) {
    const SyntheticSpec& s = *c.synthetic;
    out << "data.synthetic.n = " << s.n << "\n"
        << "data.synthetic.d = " << s.d << "\n"
        << "data.synthetic.density = " << num(s.density) << "\n"
        << "data.synthetic.condition = " << num(s.condition) << "\n"
        << "data.synthetic.noise = " << num(s.noise) << "\n"
        << "data.synthetic.seed = " << s.seed << "\n";
  }
  out << "model.loss = " << to_string(c.loss) << "\n"
      << "model.ridge = " << num(c.ridge) << "\n"
      << "model.l1 = " << num(c.l1) << "\n"
      << "reference.enabled = " << (c.reference ? "true" : "false") << "\n"
      << "reference.tol = " << num(c.reference_tol) << "\n"
      << "output.dir = " << c.output_dir << "\n"
      << "output.prefix = " << c.output_prefix << "\n";
  out << "solvers = ";
  for (std::size_t i = 0; i < c.solvers.size(); ++i) {
    out << (i ? ", " : "") << c.solvers[i].name;
  }
  out << "\n";
  for (const auto& s : c.solvers) {
    const std::string p = "solver." + s.name + ".";
    const SolverConfig& sc = s.config;
    out << p << "kind = " << to_string(sc.kind) << "\n"
        << p << "epochs = " << sc.epochs << "\n"
        << p << "inner_loop = " << sc.inner_loop << "\n";
    if (s.eta_auto) out << p << "eta = auto\n";
    else if (sc.eta) out << p << "eta = " << num(*sc.eta) << "\n";
    out << p << "batch = " << sc.batch << "\n"
        << p << "hessian_batch = " << sc.hessian_batch << "\n"
        << p << "metric_period = " << sc.metric_period << "\n"
        << p << "alpha = " << num(sc.alpha) << "\n"
        << p << "skip_eps = " << num(sc.skip_eps) << "\n"
        << p << "sampling = " << to_string(sc.sampling) << "\n"
        << p << "seed = " << sc.seed << "\n"
        << p << "force_identity_metric = " << (sc.force_identity_metric ? "true" : "false")
        << "\n"
        << p << "step_decay = " << num(sc.step_decay) << "\n"
        << p << "divergence_factor = " << num(sc.divergence_factor) << "\n"
        << p << "dense_limit = " << sc.dense_limit << "\n";
  }
  return out.str();
}

SyntheticSpec parse_synthetic_config(std::istream& in) {
  const auto entries = read_entries(in);
  SyntheticSpec spec;
  for (const auto& [key, e] : entries) {
    if (apply_synthetic_key(spec, key, e)) continue;
    if (key == "model.loss") {
      spec.loss = parse_loss(key, e);
      continue;
    }
    throw ConfigError("unknown key '" + key + "' (gen accepts data.synthetic.* and model.loss)",
                      e.line);
  }
  try {
    validate(spec);
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(ex.what());
  }
  return spec;
}

SyntheticSpec read_synthetic_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::ios_base::failure("cannot open config '" + path + "'");
  return parse_synthetic_config(in);
}

}  // namespace psqn
