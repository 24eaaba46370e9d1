#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "usd/engine.hpp"
#include "usd/errors.hpp"

namespace usd {

namespace {

constexpr const char* kMagic = "usd-checkpoint v1";

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

void write_values(std::ostream& os, const char* tag,
                  const std::vector<double>& values) {
  os << tag;
  os << std::hexfloat;
  for (double v : values) os << ' ' << v;
  os << std::defaultfloat << '\n';
}

// istream hexfloat extraction is unreliable across standard libraries;
// strtod handles the %a form everywhere.
double parse_double(const std::string& tok, const std::string& ctx) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw ConfigError("checkpoint: bad number '" + tok + "' in " + ctx);
  return v;
}

std::vector<double> read_values(std::istream& is, const std::string& expected_tag,
                                std::size_t count) {
  std::string line;
  if (!std::getline(is, line))
    throw ConfigError("checkpoint: truncated at " + expected_tag);
  std::istringstream ss(line);
  std::string tag;
  ss >> tag;
  if (tag != expected_tag)
    throw ConfigError("checkpoint: expected '" + expected_tag + "', got '" + tag + "'");
  std::vector<double> out;
  out.reserve(count);
  std::string tok;
  while (ss >> tok) out.push_back(parse_double(tok, expected_tag));
  if (out.size() != count)
    throw ConfigError("checkpoint: " + expected_tag + " has " +
                      std::to_string(out.size()) + " values, expected " +
                      std::to_string(count));
  return out;
}

void write_model(std::ostream& os, const char* name, const ModelParams& m) {
  os << "model " << name << "\nlayers " << m.layers.size() << '\n';
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const Layer& l = m.layers[li];
    os << "layer " << li << " tanh " << (l.tanh_act ? 1 : 0) << " out "
       << l.w.rows << " in " << l.w.cols << '\n';
    write_values(os, "w", l.w.data);
    write_values(os, "b", l.b);
    write_values(os, "wmask", l.w_mask.data);
    write_values(os, "bmask", l.b_mask);
  }
}

ModelParams read_model(std::istream& is, const std::string& name) {
  std::string word;
  std::size_t layer_count = 0;
  is >> word;
  if (word != "model") throw ConfigError("checkpoint: expected 'model'");
  is >> word;
  if (word != name)
    throw ConfigError("checkpoint: expected model '" + name + "', got '" + word + "'");
  is >> word >> layer_count;
  if (word != "layers") throw ConfigError("checkpoint: expected 'layers'");
  ModelParams m;
  for (std::size_t li = 0; li < layer_count; ++li) {
    std::size_t idx = 0, out = 0, in = 0;
    int tanh_flag = 0;
    is >> word >> idx;
    if (word != "layer") throw ConfigError("checkpoint: expected 'layer'");
    is >> word >> tanh_flag >> word >> out >> word >> in;
    is.ignore(1, '\n');
    Layer l;
    l.tanh_act = tanh_flag != 0;
    l.w = Matrix(out, in);
    l.w.data = read_values(is, "w", out * in);
    l.b = read_values(is, "b", out);
    l.w_mask = Matrix(out, in);
    l.w_mask.data = read_values(is, "wmask", out * in);
    l.b_mask = read_values(is, "bmask", out);
    m.layers.push_back(std::move(l));
  }
  return m;
}

void write_velocity(std::ostream& os, const SgdState& v) {
  os << "velocity " << v.velocity.size() << '\n';
  for (const LayerGrads& g : v.velocity) {
    write_values(os, "vw", g.dw.data);
    write_values(os, "vb", g.db);
  }
}

SgdState read_velocity(std::istream& is, const ModelParams& shapes) {
  std::string word;
  std::size_t count = 0;
  is >> word >> count;
  if (word != "velocity" || count != shapes.layers.size())
    throw ConfigError("checkpoint: malformed velocity section");
  is.ignore(1, '\n');
  SgdState st = make_sgd_state(shapes);
  for (std::size_t li = 0; li < count; ++li) {
    st.velocity[li].dw.data =
        read_values(is, "vw", shapes.layers[li].w.data.size());
    st.velocity[li].db = read_values(is, "vb", shapes.layers[li].b.size());
  }
  return st;
}

// Atomic write: temp file in the same directory, then rename.
void commit_file(const std::string& path, const std::string& body) {
  const std::string payload = body + "checksum " + std::to_string(fnv1a(body)) + "\n";
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw ConfigError("checkpoint: cannot write " + tmp);
    os << payload;
  }
  std::filesystem::rename(tmp, path);
}

std::string read_and_verify(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string content = ss.str();
  const auto pos = content.rfind("checksum ");
  if (pos == std::string::npos)
    throw ConfigError("checkpoint: missing checksum in " + path);
  const std::string body = content.substr(0, pos);
  std::istringstream tail(content.substr(pos));
  std::string word;
  std::uint64_t stored = 0;
  tail >> word >> stored;
  if (stored != fnv1a(body))
    throw ConfigError("checkpoint: integrity check failed for " + path);
  return body;
}

}  // namespace

void save_model_checkpoint(const std::string& path, std::uint64_t seed,
                           const ModelParams& params) {
  std::ostringstream os;
  os << kMagic << "\nkind source-model\nseed " << seed << '\n';
  write_model(os, "model", params);
  commit_file(path, os.str());
}

ModelParams load_model_checkpoint(const std::string& path, std::uint64_t* seed_out) {
  std::istringstream is(read_and_verify(path));
  std::string line;
  std::getline(is, line);
  if (line != kMagic) throw ConfigError("checkpoint: version mismatch in " + path);
  std::string word, kind;
  is >> word >> kind;
  if (word != "kind" || kind != "source-model")
    throw ConfigError("checkpoint: " + path + " is not a source model");
  std::uint64_t seed = 0;
  is >> word >> seed;
  if (seed_out != nullptr) *seed_out = seed;
  return read_model(is, "model");
}

void save_engine_state(const std::string& path, std::uint64_t cfg_hash,
                       std::uint64_t seed, const EngineState& state) {
  std::ostringstream os;
  os << kMagic << "\nkind adapt-state\nconfig_hash " << cfg_hash << "\nseed "
     << seed << "\nepochs_done " << state.epochs_done << '\n';
  write_values(os, "curriculum",
               {state.curriculum.gamma, state.curriculum.prev_known_ce,
                state.curriculum.beta, static_cast<double>(state.curriculum.iteration)});
  os << "has_last_fit " << (state.has_last_fit ? 1 : 0) << '\n';
  write_values(os, "last_fit",
               {state.last_fit.mu_low, state.last_fit.mu_high, state.last_fit.var_low,
                state.last_fit.var_high, state.last_fit.degenerate ? 1.0 : 0.0});
  write_model(os, "student", state.student);
  write_model(os, "teacher", state.teacher);
  write_velocity(os, state.velocity);
  commit_file(path, os.str());
}

EngineState load_engine_state(const std::string& path, std::uint64_t expected_hash,
                              std::uint64_t* seed_out) {
  std::istringstream is(read_and_verify(path));
  std::string line;
  std::getline(is, line);
  if (line != kMagic) throw ConfigError("checkpoint: version mismatch in " + path);
  std::string word, kind;
  is >> word >> kind;
  if (word != "kind" || kind != "adapt-state")
    throw ConfigError("checkpoint: " + path + " is not an adaptation state");
  std::uint64_t hash = 0, seed = 0;
  is >> word >> hash;
  if (word != "config_hash")
    throw ConfigError("checkpoint: missing config hash in " + path);
  if (hash != expected_hash)
    throw ConfigError("checkpoint: config hash mismatch; refusing to resume");
  is >> word >> seed;
  if (seed_out != nullptr) *seed_out = seed;
  EngineState st;
  is >> word >> st.epochs_done;
  if (word != "epochs_done")
    throw ConfigError("checkpoint: missing epochs_done in " + path);
  is.ignore(1, '\n');
  const auto cur = read_values(is, "curriculum", 4);
  st.curriculum.gamma = cur[0];
  st.curriculum.prev_known_ce = cur[1];
  st.curriculum.beta = cur[2];
  st.curriculum.iteration = static_cast<long>(cur[3]);
  int has_fit = 0;
  is >> word >> has_fit;
  st.has_last_fit = has_fit != 0;
  is.ignore(1, '\n');
  const auto fit = read_values(is, "last_fit", 5);
  st.last_fit.mu_low = fit[0];
  st.last_fit.mu_high = fit[1];
  st.last_fit.var_low = fit[2];
  st.last_fit.var_high = fit[3];
  st.last_fit.degenerate = fit[4] != 0.0;
  st.student = read_model(is, "student");
  st.teacher = read_model(is, "teacher");
  st.velocity = read_velocity(is, st.student);
  return st;
}

}  // namespace usd
