#include "diffmatte/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "diffmatte/errors.hpp"

namespace diffmatte {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename V>
V parse_number(std::string_view text, const std::string& key) {
  V value{};
  const auto* begin = text.data();
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(ParseError::Kind::BadSyntax, "key '" + key + "': cannot parse '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}


std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  if (trim(text).empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto pos = text.find(sep, start);
    out.emplace_back(trim(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<int> parse_int_list(std::string_view text) {
  std::vector<int> out;
  for (const auto& piece : split(text, ',')) out.push_back(parse_number<int>(piece, "list"));
  return out;
}

std::vector<double> parse_double_list(std::string_view text) {
  std::vector<double> out;
  for (const auto& piece : split(text, ',')) out.push_back(parse_number<double>(piece, "list"));
  return out;
}

KeyValues KeyValues::parse(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(ParseError::Kind::BadSyntax, "line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(ParseError::Kind::BadSyntax, "line " + std::to_string(line_no) + ": empty key");
    kv.entries_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string KeyValues::str() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
  return out;
}

const std::string* KeyValues::find(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  consumed_.insert(key);
  return &it->second;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? *v : fallback;
}

int KeyValues::get_int(const std::string& key, int fallback) const {
  const auto* v = find(key);
  return v ? parse_number<int>(*v, key) : fallback;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  return v ? parse_number<double>(*v, key) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  return v ? parse_number<std::uint64_t>(*v, key) : fallback;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "off") return false;
  throw ParseError(ParseError::Kind::BadSyntax, "key '" + key + "': expected a boolean");
}

std::vector<int> KeyValues::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  const auto* v = find(key);
  return v ? parse_int_list(*v) : fallback;
}

void KeyValues::require_all_consumed() const {
  for (const auto& [k, v] : entries_) {
    if (!consumed_.contains(k)) throw ParseError(ParseError::Kind::UnknownKey, "unknown config key '" + k + "'");
  }
}

void write_model_config(const ModelConfig& cfg, KeyValues& kv) {
  kv.set("decoder.nc", std::to_string(cfg.net.n_c));
  kv.set("decoder.nf", std::to_string(cfg.net.n_f));
  kv.set("decoder.nd", std::to_string(cfg.net.n_d));
  kv.set("decoder.feature_stride", std::to_string(cfg.net.feature_stride));
  kv.set("decoder.time_frequencies", std::to_string(cfg.net.time_frequencies));
  std::string up;
  for (int c : cfg.net.up_channels) up += (up.empty() ? "" : ",") + std::to_string(c);
  kv.set("decoder.up_channels", up);
  kv.set("schedule.kind", to_string(cfg.schedule.kind));
  kv.set("schedule.input_scale", format_double(cfg.schedule.input_scale));
  kv.set("schedule.sigmoid_start", format_double(cfg.schedule.sigmoid_start));
  kv.set("schedule.sigmoid_end", format_double(cfg.schedule.sigmoid_end));
  kv.set("schedule.sigmoid_tau", format_double(cfg.schedule.sigmoid_tau));
}

ModelConfig read_model_config(const KeyValues& kv, const ModelConfig& defaults) {
  ModelConfig cfg = defaults;
  cfg.net.n_c = kv.get_int("decoder.nc", cfg.net.n_c);
  cfg.net.n_f = kv.get_int("decoder.nf", cfg.net.n_f);
  cfg.net.n_d = kv.get_int("decoder.nd", cfg.net.n_d);
  cfg.net.feature_stride = kv.get_int("decoder.feature_stride", cfg.net.feature_stride);
  cfg.net.time_frequencies = kv.get_int("decoder.time_frequencies", cfg.net.time_frequencies);
  cfg.net.up_channels = kv.get_int_list("decoder.up_channels", cfg.net.up_channels);
  cfg.schedule.kind = parse_schedule_kind(kv.get_string("schedule.kind", to_string(cfg.schedule.kind)));
  cfg.schedule.input_scale = kv.get_double("schedule.input_scale", cfg.schedule.input_scale);
  cfg.schedule.sigmoid_start = kv.get_double("schedule.sigmoid_start", cfg.schedule.sigmoid_start);
  cfg.schedule.sigmoid_end = kv.get_double("schedule.sigmoid_end", cfg.schedule.sigmoid_end);
  cfg.schedule.sigmoid_tau = kv.get_double("schedule.sigmoid_tau", cfg.schedule.sigmoid_tau);
  cfg.net.validate();
  cfg.schedule.validate();
  return cfg;
}

}  // namespace diffmatte
