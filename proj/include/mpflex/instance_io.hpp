#pragma once

#include "mpflex/market.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace mpflex {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

struct LineReader {
  std::string path;
  int lineno = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(path + ":" + std::to_string(lineno) + ": " + msg);
  }
};

inline std::string strip(const std::string& s) {
  const std::string ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(ws);
  return s.substr(a, b - a + 1);
}

inline double parse_num(const LineReader& lr, const std::string& tok,
                        const std::string& field) {
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(tok, &pos);
  } catch (const std::exception&) {
    lr.fail("field '" + field + "': not a number: '" + tok + "'");
  }
  if (pos != tok.size()) lr.fail("field '" + field + "': trailing junk in '" + tok + "'");
  return v;
}

inline int parse_int(const LineReader& lr, const std::string& tok, const std::string& field) {
  const double v = parse_num(lr, tok, field);
  const int i = static_cast<int>(v);
  if (i != v) lr.fail("field '" + field + "': expected an integer, got '" + tok + "'");
  return i;
}

inline std::vector<std::string> tokens(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

}  // namespace detail

/// Versioned sectioned text format. Bus indices are 1-based in the file.
///
///   mpflex-instance v1
///   buses N / slack B / tau T / knots K / epsilon E
///   [lines]   from to reactance limit
///   [users]   kind bus d d_lo d_hi alpha beta zeta [w]
///   [fixed]   bus kw
///   [theta]   lo hi            (one row per prosumer)
inline MarketInstance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  detail::LineReader lr{path, 0};

  MarketInstance inst;
  std::vector<std::pair<double, double>> theta_rows;
  std::string section;
  bool header_seen = false, buses_seen = false;
  std::string raw;
  while (std::getline(in, raw)) {
    ++lr.lineno;
    std::string line = raw;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::strip(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "mpflex-instance v1")
        lr.fail("expected header 'mpflex-instance v1', got '" + line + "'");
      header_seen = true;
      continue;
    }
    if (line.front() == '[') {
      if (line.back() != ']') lr.fail("malformed section header '" + line + "'");
      section = line.substr(1, line.size() - 2);
      if (section != "lines" && section != "users" && section != "fixed" && section != "theta")
        lr.fail("unknown section '" + section + "'");
      continue;
    }
    const std::vector<std::string> tok = detail::tokens(line);
    if (section.empty()) {
      if (tok.size() != 2) lr.fail("expected 'key value' before first section");
      const std::string& key = tok[0];
      if (key == "buses") { inst.network.num_buses = detail::parse_int(lr, tok[1], key); buses_seen = true; }
      else if (key == "slack") inst.network.slack = detail::parse_int(lr, tok[1], key) - 1;
      else if (key == "tau") inst.tau = detail::parse_num(lr, tok[1], key);
      else if (key == "knots") inst.knots = detail::parse_int(lr, tok[1], key);
      else if (key == "epsilon") inst.epsilon = detail::parse_num(lr, tok[1], key);
      else lr.fail("unknown key '" + key + "'");
    } else if (section == "lines") {
      if (tok.size() != 4) lr.fail("[lines] row needs: from to reactance limit");
      Line l;
      l.from = detail::parse_int(lr, tok[0], "from") - 1;
      l.to = detail::parse_int(lr, tok[1], "to") - 1;
      l.reactance = detail::parse_num(lr, tok[2], "reactance");
      l.limit = detail::parse_num(lr, tok[3], "limit");
      inst.network.lines.push_back(l);
    } else if (section == "users") {
      if (tok.size() != 8 && tok.size() != 9)
        lr.fail("[users] row needs: kind bus d d_lo d_hi alpha beta zeta [w]");
      User u;
      if (tok[0] == "consumer") u.kind = UserKind::Consumer;
      else if (tok[0] == "prosumer") u.kind = UserKind::Prosumer;
      else lr.fail("field 'kind': expected consumer|prosumer, got '" + tok[0] + "'");
      u.bus = detail::parse_int(lr, tok[1], "bus") - 1;
      u.d = detail::parse_num(lr, tok[2], "d");
      u.d_lo = detail::parse_num(lr, tok[3], "d_lo");
      u.d_hi = detail::parse_num(lr, tok[4], "d_hi");
      u.alpha = detail::parse_num(lr, tok[5], "alpha");
      u.beta = detail::parse_num(lr, tok[6], "beta");
      u.zeta = detail::parse_num(lr, tok[7], "zeta");
      if (u.kind == UserKind::Prosumer) {
        if (tok.size() != 9) lr.fail("prosumer row needs the forecast output w");
        u.w = detail::parse_num(lr, tok[8], "w");
      } else if (tok.size() == 9) {
        lr.fail("consumer row must not carry a forecast output w");
      }
      inst.users.push_back(u);
    } else if (section == "fixed") {
      if (tok.size() != 2) lr.fail("[fixed] row needs: bus kw");
      inst.fixed_loads.emplace_back(detail::parse_int(lr, tok[0], "bus") - 1,
                                    detail::parse_num(lr, tok[1], "kw"));
    } else if (section == "theta") {
      if (tok.size() != 2) lr.fail("[theta] row needs: lo hi");
      theta_rows.emplace_back(detail::parse_num(lr, tok[0], "lo"),
                              detail::parse_num(lr, tok[1], "hi"));
    }
  }
  lr.lineno = 0;
  if (!header_seen) lr.fail("empty file: missing 'mpflex-instance v1' header");
  if (!buses_seen) lr.fail("missing 'buses' key");
  if (inst.users.empty()) lr.fail("missing [users] section");
  inst.theta_lo.resize(theta_rows.size());
  inst.theta_hi.resize(theta_rows.size());
  for (std::size_t i = 0; i < theta_rows.size(); ++i) {
    inst.theta_lo[i] = theta_rows[i].first;
    inst.theta_hi[i] = theta_rows[i].second;
  }
  try {
    inst.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(path + ": " + e.what());
  }
  return inst;
}

inline std::string serialize_instance(const MarketInstance& inst) {
  std::ostringstream os;
  os.precision(12);
  os << "mpflex-instance v1\n";
  os << "buses " << inst.network.num_buses << "\n";
  os << "slack " << inst.network.slack + 1 << "\n";
  os << "tau " << inst.tau << "\n";
  os << "knots " << inst.knots << "\n";
  os << "epsilon " << inst.epsilon << "\n\n[lines]\n";
  for (const Line& l : inst.network.lines)
    os << l.from + 1 << " " << l.to + 1 << " " << l.reactance << " " << l.limit << "\n";
  os << "\n[users]\n";
  for (const User& u : inst.users) {
    os << (u.kind == UserKind::Prosumer ? "prosumer " : "consumer ") << u.bus + 1 << " "
       << u.d << " " << u.d_lo << " " << u.d_hi << " " << u.alpha << " " << u.beta << " "
       << u.zeta;
    if (u.kind == UserKind::Prosumer) os << " " << u.w;
    os << "\n";
  }
  if (!inst.fixed_loads.empty()) {
    os << "\n[fixed]\n";
    for (const auto& [bus, kw] : inst.fixed_loads) os << bus + 1 << " " << kw << "\n";
  }
  if (inst.theta_lo.size() > 0) {
    os << "\n[theta]\n";
    for (int j = 0; j < inst.theta_lo.size(); ++j)
      os << inst.theta_lo[j] << " " << inst.theta_hi[j] << "\n";
  }
  return os.str();
}

}  // namespace mpflex
