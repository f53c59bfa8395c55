#include "qmetro/weights.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include <json.hpp>

namespace qmetro {

static_assert(std::endian::native == std::endian::little,
              "weight container I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'Q', 'M', 'W', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kTagBytes = 16;

enum class DType : std::uint32_t { f64 = 1, u32 = 2, utf8 = 3 };

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f64:
      return 8;
    case DType::u32:
      return 4;
    case DType::utf8:
      return 1;
  }
  return 0;
}

struct Record {
  DType dtype;
  std::vector<std::uint64_t> dims;
  std::vector<unsigned char> payload;
  std::size_t offset;  // of the tag

  std::uint64_t count() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

class Reader {
 public:
  explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

  void read(void* dst, std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) {
      throw WeightFormatError("truncated weight file: " + what + " at byte offset " +
                              std::to_string(pos_) + " needs " + std::to_string(n) +
                              " bytes, " + std::to_string(bytes_.size() - pos_) + " left");
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <class T>
  T get(const std::string& what) {
    T v;
    read(&v, sizeof v, what);
    return v;
  }

 private:
  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

struct Container {
  std::map<std::string, Record> records;
  // Set when the file ends cleanly between records before the declared count.
  std::string truncation;
};

Container read_records(std::span<const unsigned char> bytes) {
  Reader in(bytes);
  char magic[4];
  in.read(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) {
    throw WeightFormatError("not a weight container (bad magic)");
  }
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVersion) {
    throw WeightFormatError("unsupported weight container version " + std::to_string(version));
  }
  const auto n_records = in.get<std::uint32_t>("record count");
  Container out;
  auto& records = out.records;
  for (std::uint32_t i = 0; i < n_records; ++i) {
    if (in.done()) {
      out.truncation = "file truncated after " + std::to_string(i) + " of " +
                       std::to_string(n_records) + " records";
      return out;
    }
    Record rec;
    rec.offset = in.pos();
    char tag_raw[kTagBytes];
    in.read(tag_raw, kTagBytes, "tag of record " + std::to_string(i));
    const std::string tag(tag_raw, strnlen(tag_raw, kTagBytes));
    const std::string ctx = "record '" + tag + "'";
    rec.dtype = static_cast<DType>(in.get<std::uint32_t>(ctx + " dtype"));
    if (dtype_size(rec.dtype) == 0) {
      throw WeightFormatError(ctx + ": unknown dtype at offset " + std::to_string(rec.offset));
    }
    const auto rank = in.get<std::uint32_t>(ctx + " rank");
    if (rank > 4) throw WeightFormatError(ctx + ": rank " + std::to_string(rank) + " too large");
    for (std::uint32_t d = 0; d < rank; ++d) rec.dims.push_back(in.get<std::uint64_t>(ctx + " dims"));
    const std::uint64_t n = rec.count();
    if (n > (std::uint64_t{1} << 32)) throw WeightFormatError(ctx + ": implausible size");
    rec.payload.resize(n * dtype_size(rec.dtype));
    in.read(rec.payload.data(), rec.payload.size(), ctx + " payload");
    if (!records.emplace(tag, std::move(rec)).second) {
      throw WeightFormatError("duplicate record '" + tag + "'");
    }
  }
  if (!in.done()) {
    throw WeightFormatError("trailing bytes after the last record at offset " +
                            std::to_string(in.pos()));
  }
  return out;
}

const Record& require(const Container& c, const std::string& tag, DType dtype) {
  auto it = c.records.find(tag);
  if (it == c.records.end()) {
    throw WeightFormatError("missing tensor '" + tag + "'" +
                            (c.truncation.empty() ? "" : " (" + c.truncation + ")"));
  }
  if (it->second.dtype != dtype) throw WeightFormatError("tensor '" + tag + "' has wrong dtype");
  return it->second;
}

std::vector<double> as_f64(const Record& r) {
  std::vector<double> v(r.count());
  std::memcpy(v.data(), r.payload.data(), r.payload.size());
  return v;
}

std::vector<std::uint32_t> as_u32(const Record& r) {
  std::vector<std::uint32_t> v(r.count());
  std::memcpy(v.data(), r.payload.data(), r.payload.size());
  return v;
}

void expect_dims(const Record& r, const std::string& tag, std::vector<std::uint64_t> dims) {
  if (r.dims != dims) {
    std::ostringstream os;
    os << "tensor '" << tag << "' has shape [";
    for (std::size_t i = 0; i < r.dims.size(); ++i) os << (i ? "," : "") << r.dims[i];
    os << "], expected [";
    for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
    os << "]";
    throw WeightFormatError(os.str());
  }
}

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class T>
  void put(T v) {
    raw(&v, sizeof v);
  }
  void record(const std::string& tag, DType dtype, std::vector<std::uint64_t> dims,
              const void* data, std::size_t bytes) {
    char tag_raw[kTagBytes] = {};
    std::memcpy(tag_raw, tag.data(), std::min(tag.size(), kTagBytes));
    raw(tag_raw, kTagBytes);
    put(static_cast<std::uint32_t>(dtype));
    put(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) put<std::uint64_t>(d);
    raw(data, bytes);
    ++count_;
  }
  std::vector<unsigned char> finish() {
    std::vector<unsigned char> head(kMagic, kMagic + 4);
    auto append32 = [&](std::uint32_t v) {
      const auto* b = reinterpret_cast<const unsigned char*>(&v);
      head.insert(head.end(), b, b + 4);
    };
    append32(kVersion);
    append32(count_);
    head.insert(head.end(), out_.begin(), out_.end());
    return head;
  }

 private:
  std::vector<unsigned char> out_;
  std::uint32_t count_ = 0;
};

}  // namespace

std::string activation_name(kernels::Activation act) {
  switch (act) {
    case kernels::Activation::tanh:
      return "tanh";
    case kernels::Activation::relu:
      return "relu";
    case kernels::Activation::identity:
      return "identity";
  }
  return "tanh";
}

kernels::Activation parse_activation(const std::string& name) {
  if (name == "tanh") return kernels::Activation::tanh;
  if (name == "relu") return kernels::Activation::relu;
  if (name == "identity" || name == "linear") return kernels::Activation::identity;
  throw WeightFormatError("unknown activation '" + name + "'");
}

void NeuralWeights::validate() const {
  if (sizes.size() < 2) throw WeightFormatError("need at least one layer");
  const std::size_t layers = sizes.size() - 1;
  if (weights.size() != layers || biases.size() != layers) {
    throw WeightFormatError("layer count does not match sizes");
  }
  if (sizes.back() != 1) throw WeightFormatError("actor output width must be 1");
  for (std::size_t k = 0; k < layers; ++k) {
    if (sizes[k] == 0 || sizes[k + 1] == 0) throw WeightFormatError("zero-width layer");
    if (weights[k].size() != sizes[k] * sizes[k + 1]) {
      throw WeightFormatError("w" + std::to_string(k) + " shape does not chain");
    }
    if (biases[k].size() != sizes[k + 1]) {
      throw WeightFormatError("b" + std::to_string(k) + " shape does not chain");
    }
    for (double v : weights[k]) {
      if (!std::isfinite(v)) throw WeightFormatError("w" + std::to_string(k) + " has non-finite entries");
    }
    for (double v : biases[k]) {
      if (!std::isfinite(v)) throw WeightFormatError("b" + std::to_string(k) + " has non-finite entries");
    }
  }
  if (log_std && !std::isfinite(*log_std)) throw WeightFormatError("log_std is not finite");
  if (normalization) {
    const auto& n = *normalization;
    if (n.offset.size() != sizes[0] || n.scale.size() != sizes[0]) {
      throw WeightFormatError("observation normalization has the wrong width");
    }
    for (std::size_t i = 0; i < sizes[0]; ++i) {
      if (!std::isfinite(n.offset[i]) || !std::isfinite(n.scale[i]) || n.scale[i] == 0.0) {
        throw WeightFormatError("observation normalization entry " + std::to_string(i) +
                                " is invalid");
      }
    }
    if (!(n.clip >= 0.0) || !std::isfinite(n.clip)) throw WeightFormatError("obs_clip must be >= 0");
  }
}

std::vector<kernels::DenseView> NeuralWeights::layer_views() const {
  std::vector<kernels::DenseView> views;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    views.push_back({sizes[k], sizes[k + 1], weights[k].data(), biases[k].data()});
  }
  return views;
}

std::size_t NeuralWeights::max_width() const {
  std::size_t m = 0;
  for (auto s : sizes) m = std::max(m, s);
  return m;
}

NeuralWeights parse_weights(std::span<const unsigned char> bytes) {
  const auto container = read_records(bytes);
  const auto& recs = container.records;
  NeuralWeights w;
  const auto sizes = as_u32(require(container, "sizes", DType::u32));
  w.sizes.assign(sizes.begin(), sizes.end());
  if (w.sizes.size() < 2) throw WeightFormatError("'sizes' needs at least two entries");
  const auto& act = require(container, "activation", DType::utf8);
  w.activation = parse_activation(std::string(act.payload.begin(), act.payload.end()));
  for (std::size_t k = 0; k + 1 < w.sizes.size(); ++k) {
    const std::string wt = "w" + std::to_string(k), bt = "b" + std::to_string(k);
    const auto& wr = require(container, wt, DType::f64);
    expect_dims(wr, wt, {w.sizes[k + 1], w.sizes[k]});
    const auto& br = require(container, bt, DType::f64);
    expect_dims(br, bt, {w.sizes[k + 1]});
    w.weights.push_back(as_f64(wr));
    w.biases.push_back(as_f64(br));
  }
  if (auto it = recs.find("log_std"); it != recs.end()) {
    expect_dims(it->second, "log_std", {1});
    w.log_std = as_f64(it->second)[0];
  }
  if (auto it = recs.find("obs_layout"); it != recs.end()) {
    expect_dims(it->second, "obs_layout", {1});
    w.obs_layout = static_cast<int>(as_u32(it->second)[0]);
  }
  const bool has_off = recs.count("obs_offset") != 0;
  const bool has_scale = recs.count("obs_scale") != 0;
  if (has_off != has_scale) require(container, has_off ? "obs_scale" : "obs_offset", DType::f64);
  if (has_off) {
    ObsNormalization n;
    const auto& off = require(container, "obs_offset", DType::f64);
    const auto& sc = require(container, "obs_scale", DType::f64);
    expect_dims(off, "obs_offset", {w.sizes[0]});
    expect_dims(sc, "obs_scale", {w.sizes[0]});
    n.offset = as_f64(off);
    n.scale = as_f64(sc);
    if (auto it = recs.find("obs_clip"); it != recs.end()) n.clip = as_f64(it->second).at(0);
    w.normalization = std::move(n);
  }
  w.validate();
  return w;
}

std::vector<unsigned char> serialize_weights(const NeuralWeights& w) {
  w.validate();
  Writer out;
  std::vector<std::uint32_t> sizes(w.sizes.begin(), w.sizes.end());
  out.record("sizes", DType::u32, {sizes.size()}, sizes.data(), sizes.size() * 4);
  const std::string act = activation_name(w.activation);
  out.record("activation", DType::utf8, {act.size()}, act.data(), act.size());
  const std::uint32_t layout = static_cast<std::uint32_t>(w.obs_layout);
  out.record("obs_layout", DType::u32, {1}, &layout, 4);
  for (std::size_t k = 0; k + 1 < w.sizes.size(); ++k) {
    out.record("w" + std::to_string(k), DType::f64, {w.sizes[k + 1], w.sizes[k]},
               w.weights[k].data(), w.weights[k].size() * 8);
    out.record("b" + std::to_string(k), DType::f64, {w.sizes[k + 1]}, w.biases[k].data(),
               w.biases[k].size() * 8);
  }
  if (w.log_std) out.record("log_std", DType::f64, {1}, &*w.log_std, 8);
  if (w.normalization) {
    const auto& n = *w.normalization;
    out.record("obs_offset", DType::f64, {n.offset.size()}, n.offset.data(), n.offset.size() * 8);
    out.record("obs_scale", DType::f64, {n.scale.size()}, n.scale.data(), n.scale.size() * 8);
    out.record("obs_clip", DType::f64, {1}, &n.clip, 8);
  }
  return out.finish();
}

NeuralWeights parse_weights_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw WeightFormatError(std::string("weight JSON: ") + e.what());
  }
  auto field = [&](const std::string& key) -> const nlohmann::json& {
    if (!j.contains(key)) throw WeightFormatError("missing tensor '" + key + "'");
    return j.at(key);
  };
  try {
    if (j.value("format", std::string("qmetro-weights")) != "qmetro-weights" ||
        j.value("version", 1) != 1) {
      throw WeightFormatError("unsupported weight JSON format/version");
    }
    NeuralWeights w;
    w.sizes = field("sizes").get<std::vector<std::size_t>>();
    w.activation = parse_activation(field("activation").get<std::string>());
    w.obs_layout = j.value("obs_layout", 1);
    for (std::size_t k = 0; k + 1 < w.sizes.size(); ++k) {
      const auto rows = field("w" + std::to_string(k)).get<std::vector<std::vector<double>>>();
      std::vector<double> flat;
      for (const auto& row : rows) {
        if (row.size() != w.sizes[k]) {
          throw WeightFormatError("tensor 'w" + std::to_string(k) + "' row width mismatch");
        }
        flat.insert(flat.end(), row.begin(), row.end());
      }
      if (rows.size() != w.sizes[k + 1]) {
        throw WeightFormatError("tensor 'w" + std::to_string(k) + "' row count mismatch");
      }
      w.weights.push_back(std::move(flat));
      w.biases.push_back(field("b" + std::to_string(k)).get<std::vector<double>>());
    }
    if (j.contains("log_std") && !j.at("log_std").is_null()) w.log_std = j.at("log_std").get<double>();
    if (j.contains("obs_offset")) {
      ObsNormalization n;
      n.offset = j.at("obs_offset").get<std::vector<double>>();
      n.scale = field("obs_scale").get<std::vector<double>>();
      n.clip = j.value("obs_clip", 0.0);
      w.normalization = std::move(n);
    }
    w.validate();
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw WeightFormatError(std::string("weight JSON: ") + e.what());
  }
}

std::string serialize_weights_json(const NeuralWeights& w) {
  w.validate();
  nlohmann::json j;
  j["format"] = "qmetro-weights";
  j["version"] = 1;
  j["sizes"] = w.sizes;
  j["activation"] = activation_name(w.activation);
  j["obs_layout"] = w.obs_layout;
  for (std::size_t k = 0; k + 1 < w.sizes.size(); ++k) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t r = 0; r < w.sizes[k + 1]; ++r) {
      rows.push_back(std::vector<double>(w.weights[k].begin() + r * w.sizes[k],
                                         w.weights[k].begin() + (r + 1) * w.sizes[k]));
    }
    j["w" + std::to_string(k)] = rows;
    j["b" + std::to_string(k)] = w.biases[k];
  }
  if (w.log_std) j["log_std"] = *w.log_std;
  if (w.normalization) {
    j["obs_offset"] = w.normalization->offset;
    j["obs_scale"] = w.normalization->scale;
    j["obs_clip"] = w.normalization->clip;
  }
  return j.dump(1);
}

NeuralWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightFormatError("cannot open weight file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  std::size_t first = 0;
  while (first < bytes.size() && std::isspace(bytes[first])) ++first;
  try {
    if (first < bytes.size() && bytes[first] == '{') {
      return parse_weights_json(std::string(bytes.begin(), bytes.end()));
    }
    return parse_weights(bytes);
  } catch (const WeightFormatError& e) {
    throw WeightFormatError(path.string() + ": " + e.what());
  }
}

void save_weights(const std::filesystem::path& path, const NeuralWeights& weights) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw WeightFormatError("cannot write weight file " + path.string());
  if (path.extension() == ".json") {
    out << serialize_weights_json(weights) << '\n';
  } else {
    const auto bytes = serialize_weights(weights);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw WeightFormatError("failed writing " + path.string());
}

std::string describe_weights_file(std::span<const unsigned char> bytes) {
  const auto container = read_records(bytes);
  const auto& recs = container.records;
  std::vector<std::pair<std::size_t, std::string>> order;
  for (const auto& [tag, rec] : recs) order.emplace_back(rec.offset, tag);
  std::sort(order.begin(), order.end());
  std::ostringstream os;
  os << "magic QMWT, version " << kVersion << ", " << recs.size() << " records\n";
  for (const auto& [offset, tag] : order) {
    const auto& r = recs.at(tag);
    os << "offset " << offset << ": tag=" << tag << " dtype="
       << (r.dtype == DType::f64 ? "f64" : r.dtype == DType::u32 ? "u32" : "utf8") << " dims=[";
    for (std::size_t i = 0; i < r.dims.size(); ++i) os << (i ? "," : "") << r.dims[i];
    os << "] payload_bytes=" << r.payload.size() << "\n";
  }
  if (!container.truncation.empty()) os << container.truncation << "\n";
  return os.str();
}

}  // namespace qmetro
