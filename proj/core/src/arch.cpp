#include "atb/arch.hpp"

#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "atb/error.hpp"

namespace atb {

bool ArchConfig::operator<(const ArchConfig& o) const {
  return std::tie(l_t, d_m, d_q, d_k, d_v, d_f, d_o, h) <
         std::tie(o.l_t, o.d_m, o.d_q, o.d_k, o.d_v, o.d_f, o.d_o, o.h);
}

std::vector<std::string> validate(const ArchConfig& a) {
  std::vector<std::string> v;
  if (a.l_t < 1) v.push_back("l_t < 1");
  if (a.d_m < 1) v.push_back("d_m < 1");
  if (a.d_q < 1) v.push_back("d_q < 1");
  if (a.d_k < 1) v.push_back("d_k < 1");
  if (a.d_v < 1) v.push_back("d_v < 1");
  if (a.d_f < 1) v.push_back("d_f < 1");
  if (a.d_o < 1) v.push_back("d_o < 1");
  if (a.h < 1) v.push_back("h < 1");
  if (a.d_q != a.d_k) v.push_back("d_q != d_k");
  if (a.d_o != a.d_m) v.push_back("d_o != d_m");
  if (a.h >= 1 && a.d_q >= 1 && a.d_q % a.h != 0) v.push_back("d_q not divisible by h");
  if (a.h >= 1 && a.d_v >= 1 && a.d_v % a.h != 0) v.push_back("d_v not divisible by h");
  return v;
}

bool is_valid(const ArchConfig& a) { return validate(a).empty(); }

void require_valid(const ArchConfig& a) {
  const auto violations = validate(a);
  if (violations.empty()) return;
  std::ostringstream os;
  os << "invalid architecture " << format_compact(a) << ":";
  for (const auto& v : violations) os << " [" << v << "]";
  throw ValidationError(os.str());
}

std::string format_compact(const ArchConfig& a) {
  std::ostringstream os;
  os << a.l_t << "-" << a.d_m << "-" << a.d_f << "-" << a.h << "-" << a.d_q;
  return os.str();
}

ArchConfig parse_compact(const std::string& s) {
  std::vector<long> parts;
  std::string cur;
  for (char c : s) {
    if (c == '-') {
      parts.push_back(cur.empty() ? -1 : std::stol(cur));
      cur.clear();
    } else if (c >= '0' && c <= '9') {
      cur.push_back(c);
    } else {
      throw ConfigError("malformed architecture string \"" + s + "\": unexpected character");
    }
  }
  parts.push_back(cur.empty() ? -1 : std::stol(cur));
  if (parts.size() != 5) {
    throw ConfigError("malformed architecture string \"" + s +
                      "\": expected l_t-d_m-d_f-h-d_qkv (5 fields, got " +
                      std::to_string(parts.size()) + ")");
  }
  for (long p : parts) {
    if (p < 0) throw ConfigError("malformed architecture string \"" + s + "\": empty field");
  }
  ArchConfig a;
  a.l_t = static_cast<int>(parts[0]);
  a.d_m = static_cast<int>(parts[1]);
  a.d_f = static_cast<int>(parts[2]);
  a.h = static_cast<int>(parts[3]);
  a.d_q = a.d_k = a.d_v = static_cast<int>(parts[4]);
  a.d_o = a.d_m;
  return a;
}

std::string arch_to_kv(const ArchConfig& a) {
  nlohmann::json j{{"l_t", a.l_t}, {"d_m", a.d_m}, {"d_q", a.d_q}, {"d_k", a.d_k},
                   {"d_v", a.d_v}, {"d_f", a.d_f}, {"d_o", a.d_o}, {"h", a.h}};
  return j.dump();
}

ArchConfig arch_from_kv(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed architecture object: ") + e.what());
  }
  ArchConfig a;
  try {
    a.l_t = j.at("l_t").get<int>();
    a.d_m = j.at("d_m").get<int>();
    a.d_q = j.at("d_q").get<int>();
    a.d_k = j.at("d_k").get<int>();
    a.d_v = j.at("d_v").get<int>();
    a.d_f = j.at("d_f").get<int>();
    a.d_o = j.at("d_o").get<int>();
    a.h = j.at("h").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("architecture object missing key: ") + e.what());
  }
  return a;
}

bool fits_within(const ArchConfig& a, const ArchConfig& outer) {
  return a.l_t <= outer.l_t && a.d_m <= outer.d_m && a.d_q <= outer.d_q &&
         a.d_k <= outer.d_k && a.d_v <= outer.d_v && a.d_f <= outer.d_f && a.d_o <= outer.d_o &&
         a.h <= outer.h;
}

std::uint64_t param_count(const ArchConfig& arch, std::uint64_t vocab, std::uint64_t max_seq) {
  require_valid(arch);
  const auto dm = static_cast<std::uint64_t>(arch.d_m);
  const auto dq = static_cast<std::uint64_t>(arch.d_q);
  const auto dk = static_cast<std::uint64_t>(arch.d_k);
  const auto dv = static_cast<std::uint64_t>(arch.d_v);
  const auto df = static_cast<std::uint64_t>(arch.d_f);
  const auto dd = static_cast<std::uint64_t>(arch.d_o);
  const std::uint64_t per_layer = dm * (dq + dk + dv)  // q/k/v projections
                                  + (dq + dk + dv)     // q/k/v biases
                                  + dv * dd + dd       // output projection + bias
                                  + dm * df + df       // FFN up + bias
                                  + df * dm + dm       // FFN down + bias
                                  + 4 * dm;            // two layer-norm (gamma, beta) pairs
  return vocab * dm + max_seq * dm + static_cast<std::uint64_t>(arch.l_t) * per_layer;
}

std::uint64_t flops_forward(const ArchConfig& arch, std::uint64_t seq_len) {
  require_valid(arch);
  if (seq_len < 1) throw ContractError("flops_forward: seq_len must be >= 1");
  const auto l = seq_len;
  const auto dm = static_cast<std::uint64_t>(arch.d_m);
  const auto dq = static_cast<std::uint64_t>(arch.d_q);
  const auto dk = static_cast<std::uint64_t>(arch.d_k);
  const auto dv = static_cast<std::uint64_t>(arch.d_v);
  const auto df = static_cast<std::uint64_t>(arch.d_f);
  const auto dd = static_cast<std::uint64_t>(arch.d_o);
  const std::uint64_t per_layer = l * dm * (dq + dk + dv)  // q/k/v projections
                                  + l * l * dq             // Q K^T
                                  + l * l * dv             // attention * V
                                  + l * dv * dd            // output projection
                                  + l * dm * df            // FFN up
                                  + l * df * dm;           // FFN down
  return static_cast<std::uint64_t>(arch.l_t) * per_layer;
}

}  // namespace atb
