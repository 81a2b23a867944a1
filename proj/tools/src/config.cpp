#include "config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>

namespace mass::cli {

namespace {

struct Entry {
  const char* key;
  const char* value;
};

// The full schema with defaults, in manifest order.
constexpr Entry kSchema[] = {
    {"dataset.generator", "decoupled"},  // decoupled | gaussian | csv
    {"dataset.sigma1_sq", "1"},
    {"dataset.sigma2_sq", "0.001953125"},
    {"dataset.cov_diagonal", "1*8,0.0009765625*40"},
    {"dataset.n", "2000"},
    {"dataset.seed", "42"},
    {"dataset.path", ""},
    {"dataset.has_header", "true"},
    {"method.name", "mass"},
    {"method.params", "optimal"},  // optimal | manual
    {"method.eta1", "0.1"},
    {"method.eta2", "0"},
    {"method.gamma", "0.9"},
    {"method.form", "practical"},
    {"run.batch", "1"},  // integer or `full`
    {"run.sampling", "with_replacement"},
    {"run.max_iters", "100000"},
    {"run.target", "1e-6"},
    {"run.target_kind", "relative"},
    {"run.seed", "0"},
    {"run.repeats", "1"},
    {"run.eval_every", "1"},
    {"run.jobs", "0"},
    {"grid.eta_min", "1e-4"},
    {"grid.eta_max", "1"},
    {"grid.eta_points", "25"},
    {"grid.gammas", "0,0.5,0.8,0.9,0.95,0.99"},
    {"grid.repeats", "5"},
    {"grid.max_iters", "1000000"},
    {"regimes.m_list", "1,2,4,8,16,32,64,128"},
    {"regimes.repeats", "9"},
    {"regimes.max_iters", "1000000"},
    {"phase.sigma1_sq", "1"},
    {"phase.sigma2_sq", "0.001953125"},
    {"phase.u_min", "0.01"},
    {"phase.u_max", "0.99"},
    {"phase.u_points", "50"},
    {"phase.eta_min", "0.001"},
    {"phase.eta_max", "1"},
    {"phase.eta_points", "50"},
    {"verify.lyapunov_seeds", "200"},
    {"verify.lyapunov_t_max", "200"},
    {"verify.avr_radii", "0.5,1,2"},
    {"verify.avr_samples", "20000"},
    {"verify.equivalence_steps", "1000"},
    {"output.dir", "out"},
    {"output.plots", "true"},
};

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trimmed(text);
  double x = 0.0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty())
    throw UsageError(key + ": expected a number, got '" + text + "'");
  return x;
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  const std::string t = trimmed(text);
  std::uint64_t x = 0;
  const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), x);
  if (ec != std::errc() || end != t.data() + t.size() || t.empty())
    throw UsageError(key + ": expected a non-negative integer, got '" + text + "'");
  return x;
}

bool in_schema(const std::string& key) {
  return std::any_of(std::begin(kSchema), std::end(kSchema), [&](const Entry& e) { return key == e.key; });
}

}  // namespace

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  if (trimmed(text).empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto pos = text.find(',', start);
    const bool last = pos == std::string::npos;
    if (last) pos = text.size();
    const std::string item = trimmed(text.substr(start, pos - start));
    if (item.empty()) throw UsageError("empty item in list '" + text + "'");
    const auto star = item.find('*');
    if (star == std::string::npos) {
      out.push_back(to_double("list", item));
    } else {
      const double v = to_double("list", item.substr(0, star));
      out.insert(out.end(), to_u64("list", item.substr(star + 1)), v);
    }
    if (last) return out;
    start = pos + 1;
  }
}

Config Config::defaults() {
  Config c;
  for (const auto& e : kSchema) c.values_.emplace_back(e.key, e.value);
  c.base_dir_ = std::filesystem::current_path();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path.string());
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw UsageError("cannot parse config: " + std::string(e.what()));
  }
  Config c = defaults();
  c.base_dir_ = std::filesystem::absolute(path).parent_path();
  std::size_t count = 0;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw UsageError("config key outside a section: " + section);
    for (const auto& [key, value] : body) {
      c.set(section + "." + key, value.get_value<std::string>());
      ++count;
    }
  }
  if (count == 0) throw UsageError("config file is empty: " + path.string());
  return c;
}

void Config::set(const std::string& key, std::string value) {
  if (!in_schema(key)) throw UsageError("unknown config key: " + key);
  for (auto& [k, v] : values_) {
    if (k == key) v = trimmed(value);
  }
  if (std::find(explicit_.begin(), explicit_.end(), key) == explicit_.end()) explicit_.push_back(key);
}

bool Config::is_set(const std::string& key) const {
  return std::find(explicit_.begin(), explicit_.end(), key) != explicit_.end();
}

const std::string& Config::raw(const std::string& key) const {
  for (const auto& [k, v] : values_) {
    if (k == key) return v;
  }
  throw std::logic_error("config key not in schema: " + key);
}

std::string Config::text(const std::string& key) const { return raw(key); }

double Config::number(const std::string& key) const {
  const double x = to_double(key, raw(key));
  if (!std::isfinite(x)) throw UsageError(key + ": value must be finite");
  return x;
}

std::uint64_t Config::integer(const std::string& key) const { return to_u64(key, raw(key)); }

bool Config::flag(const std::string& key) const {
  const auto& v = raw(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw UsageError(key + ": expected true or false, got '" + v + "'");
}

std::vector<double> Config::numbers(const std::string& key) const {
  try {
    return parse_number_list(raw(key));
  } catch (const UsageError& e) {
    throw UsageError(key + ": " + e.what());
  }
}

std::vector<std::size_t> Config::integers(const std::string& key) const {
  std::vector<std::size_t> out;
  for (double x : numbers(key)) {
    if (x < 0.0 || x != std::floor(x)) throw UsageError(key + ": expected non-negative integers");
    out.push_back(static_cast<std::size_t>(x));
  }
  return out;
}

std::filesystem::path Config::resolve_path(const std::string& key) const {
  std::filesystem::path p(raw(key));
  if (p.empty()) throw UsageError(key + " is required");
  return p.is_absolute() ? p : base_dir_ / p;
}

std::vector<std::pair<std::string, std::string>> Config::resolved() const { return values_; }

}  // namespace mass::cli
