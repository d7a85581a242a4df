#include "bnp/checkpoint.hpp"

#include "bnp/csv.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bnp {

namespace {

constexpr char kMagic[8] = {'B', 'N', 'P', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("truncated checkpoint");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1u << 24)) throw std::runtime_error("corrupt checkpoint string");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw std::runtime_error("truncated checkpoint");
  return s;
}

void put_doubles(std::ostream& out, std::span<const double> v) {
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void get_doubles(std::istream& in, std::span<double> v) {
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated checkpoint");
}

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("invalid training config: " + what);
  };
  need(total_steps >= 0, "steps must be >= 0");
  need(batch_tasks >= 1, "batch must be >= 1");
  need(lr0 > 0.0, "lr must be > 0");
  need(k_train >= 1, "k must be >= 1");
  need(hidden >= 1, "hidden must be >= 1");
  need(grad_clip >= 0.0, "grad_clip must be >= 0");
  need(log_every >= 1, "log_every must be >= 1");
  need(checkpoint_every >= 0, "checkpoint_every must be >= 0");
  need(!flags.any() || is_bootstrap(model), "variants apply to bnp/banp only");
  flags.validate();
  arch().validate(model);
}

std::string TrainConfig::to_text() const {
  std::ostringstream s;
  s << "model = " << to_string(model) << '\n'
    << "dataset = " << to_string(dataset) << '\n'
    << "variant = " << flags.name() << '\n'
    << "steps = " << total_steps << '\n'
    << "batch = " << batch_tasks << '\n'
    << "lr = " << format_double(lr0) << '\n'
    << "k = " << k_train << '\n'
    << "seed = " << seed << '\n'
    << "hidden = " << hidden << '\n'
    << "iw = " << (importance_weighted ? 1 : 0) << '\n'
    << "grad_clip = " << format_double(grad_clip) << '\n'
    << "log_every = " << log_every << '\n'
    << "checkpoint_every = " << checkpoint_every << '\n';
  return s.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::runtime_error("bad config line in checkpoint: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto at = [&](const char* key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error(std::string("checkpoint config lacks '") + key + "'");
    return it->second;
  };
  TrainConfig c;
  c.model = parse_model_kind(at("model"));
  c.dataset = parse_dataset(at("dataset"));
  c.flags = VariantFlags::parse(at("variant"));
  c.total_steps = std::stoll(at("steps"));
  c.batch_tasks = std::stoi(at("batch"));
  c.lr0 = std::stod(at("lr"));
  c.k_train = std::stoi(at("k"));
  c.seed = std::stoull(at("seed"));
  c.hidden = std::stoi(at("hidden"));
  c.importance_weighted = at("iw") == "1";
  c.grad_clip = std::stod(at("grad_clip"));
  c.log_every = std::stoll(at("log_every"));
  c.checkpoint_every = std::stoll(at("checkpoint_every"));
  return c;
}

Checkpoint Checkpoint::fresh(const TrainConfig& config) {
  config.validate();
  return {config, 0, Model(config.model, config.arch(), config.seed)};
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put_string(out, ckpt.config.to_text());
  put<std::int64_t>(out, ckpt.step);
  const auto& params = ckpt.model.params();
  put<std::int64_t>(out, params.step());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.count()));
  for (const auto& info : params.infos()) {
    put_string(out, info.name);
    put<std::int32_t>(out, info.rows);
    put<std::int32_t>(out, info.cols);
    put_doubles(out, params.values().subspan(info.offset, info.size()));
    put_doubles(out, params.first_moment().subspan(info.offset, info.size()));
    put_doubles(out, params.second_moment().subspan(info.offset, info.size()));
  }
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw std::runtime_error("not a checkpoint file");
  if (get<std::uint32_t>(in) != kVersion) throw std::runtime_error("unsupported checkpoint version");
  const TrainConfig config = TrainConfig::from_text(get_string(in));
  Checkpoint ckpt = Checkpoint::fresh(config);
  ckpt.step = get<std::int64_t>(in);
  auto& params = ckpt.model.params();
  params.set_step(get<std::int64_t>(in));
  const auto count = get<std::uint32_t>(in);
  if (count != static_cast<std::uint32_t>(params.count()))
    throw std::runtime_error("checkpoint/arch mismatch: " + std::to_string(count) + " parameters stored, model has " +
                             std::to_string(params.count()));
  for (const auto& info : params.infos()) {
    const std::string name = get_string(in);
    const auto rows = get<std::int32_t>(in);
    const auto cols = get<std::int32_t>(in);
    if (name != info.name || rows != info.rows || cols != info.cols)
      throw std::runtime_error("checkpoint/arch mismatch at parameter '" + name + "' (expected '" + info.name + "' " +
                               std::to_string(info.rows) + "x" + std::to_string(info.cols) + ")");
    get_doubles(in, params.values().subspan(info.offset, info.size()));
    get_doubles(in, params.first_moment().subspan(info.offset, info.size()));
    get_doubles(in, params.second_moment().subspan(info.offset, info.size()));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_atomically(path, [&](std::ostream& out) { write_checkpoint(out, ckpt); }, /*binary=*/true);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  try {
    return read_checkpoint(in);
  } catch (const std::exception& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "': " + e.what());
  }
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  return dir / ("step_" + std::to_string(step) + ".ckpt");
}

}  // namespace bnp
