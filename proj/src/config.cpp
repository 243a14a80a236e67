#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <string>

#include "stv/error.hpp"
#include "stv/io.hpp"

namespace stv {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text, std::size_t line) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw FormatError("config line " + std::to_string(line) + ": cannot parse '" + std::string(text) + "' for " +
                      std::string(key));
  }
  return v;
}

void require(bool ok, const char* what) {
  if (!ok) throw DomainError(std::string("config: ") + what);
}

}  // namespace

void RunConfig::validate() const {
  require(T >= 1, "T must be at least 1");
  require(beta0 > 0.0 && betaT < 1.0 && beta0 <= betaT, "need 0 < beta0 <= betaT < 1");
  require(ddim_steps >= 1 && ddim_steps <= T, "ddim_steps must lie in [1, T]");
  require(eta >= 0.0, "eta must be non-negative");
  require(F >= 1, "F must be positive");
  require(F_cond >= 1 && F_cond <= F, "F_cond must lie in [1, F]");
  require(F_enh >= 1 && O < F_enh, "need 0 <= O < F_enh");
  require(Tprime >= 1 && Tprime < T, "Tprime must lie in [1, T)");
  require(ddim_steps <= Tprime, "ddim_steps must not exceed Tprime");
  require(flow_levels >= 1 && flow_iters >= 1, "flow levels and iterations must be positive");
  require(flow_lambda > 0.0, "flow_lambda must be positive");
  require(occlusion_thresh > 0.0, "occlusion_thresh must be positive");
  require(mawe_eps >= 0.0, "mawe_eps must be non-negative");
  require(scuts_window >= 1, "scuts_window must be positive");
  require(scuts_ratio > 0.0, "scuts_ratio must be positive");
  require(scuts_min_content >= 0.0, "scuts_min_content must be non-negative");
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig c;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view val = trim(line.substr(eq + 1));
    const auto d = [&] { return parse_number<double>(key, val, line_no); };
    const auto i = [&] { return parse_number<int>(key, val, line_no); };
    const auto z = [&] { return parse_number<std::size_t>(key, val, line_no); };
    if (key == "T") c.T = i();
    else if (key == "beta0") c.beta0 = d();
    else if (key == "betaT") c.betaT = d();
    else if (key == "ddim_steps") c.ddim_steps = i();
    else if (key == "eta") c.eta = d();
    else if (key == "omega_text") c.omega_text = d();
    else if (key == "omega_anchor") c.omega_anchor = d();
    else if (key == "F") c.F = z();
    else if (key == "F_cond") c.F_cond = z();
    else if (key == "F_enh") c.F_enh = z();
    else if (key == "O") c.O = z();
    else if (key == "Tprime") c.Tprime = i();
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, val, line_no);
    else if (key == "flow_levels") c.flow_levels = z();
    else if (key == "flow_iters") c.flow_iters = z();
    else if (key == "flow_lambda") c.flow_lambda = d();
    else if (key == "occlusion_thresh") c.occlusion_thresh = d();
    else if (key == "mawe_eps") c.mawe_eps = d();
    else if (key == "scuts_window") c.scuts_window = z();
    else if (key == "scuts_ratio") c.scuts_ratio = d();
    else if (key == "scuts_min_content") c.scuts_min_content = d();
    else throw FormatError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_run_config(text);
}

std::optional<std::filesystem::path> config_path_from_env() {
  const char* v = std::getenv("STV_CONFIG");
  if (!v || !*v) return std::nullopt;
  return std::filesystem::path(v);
}

}  // namespace stv
