#include "clarify/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "clarify/errors.hpp"
#include "clarify/text.hpp"

namespace clarify {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr std::string_view kMagic = "CLRFCKPT";

template <typename T>
void put(std::string& out, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  out.append(bytes, sizeof(T));
}

class Reader {
 public:
  Reader(std::string_view bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <typename T>
  T take() {
    need(sizeof(T), "integer");
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take_bytes(std::size_t n, const char* what) {
    need(n, what);
    auto view = bytes_.substr(pos_, n);
    pos_ += n;
    return view;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw CheckpointError(source_ + ": truncated checkpoint (reading " + what + " at byte " +
                            std::to_string(pos_) + ")");
    }
  }

  std::string_view bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

std::string array_section(std::span<const NamedArray> arrays) {
  std::string out;
  put<std::uint64_t>(out, arrays.size());
  for (const auto& a : arrays) {
    if (shape_size(a.shape) != a.values.size()) {
      throw UsageError("array " + a.name + " has shape " + shape_string(a.shape) + " but " +
                       std::to_string(a.values.size()) + " values");
    }
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.name.size()));
    out += a.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(a.shape.size()));
    for (auto dim : a.shape) put<std::uint64_t>(out, dim);
    put<std::uint64_t>(out, a.values.size());
    const auto* raw = reinterpret_cast<const char*>(a.values.data());
    out.append(raw, a.values.size() * sizeof(double));
  }
  return out;
}

std::string hash_section(std::string_view section) {
  std::string blob = "blob " + std::to_string(section.size());
  blob.push_back('\0');
  blob.append(section);
  return sha256_hex(blob);
}

}  // namespace

const std::string& Checkpoint::get(const std::string& key) const {
  const auto it = header.find(key);
  if (it == header.end()) throw CheckpointError("checkpoint header lacks '" + key + "'");
  return it->second;
}

const NamedArray* Checkpoint::find(std::string_view name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return &a;
  }
  return nullptr;
}

std::string content_hash(std::span<const NamedArray> arrays) {
  return hash_section(array_section(arrays));
}

std::string serialize_checkpoint(const Checkpoint& checkpoint) {
  const std::string section = array_section(checkpoint.arrays);
  auto header = checkpoint.header;
  header["content_hash"] = hash_section(section);
  std::string header_text;
  for (const auto& [key, value] : header) {
    if (key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw UsageError("checkpoint header entry '" + key + "' is not representable");
    }
    header_text += key + "=" + value + "\n";
  }
  std::string out(kMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, header_text.size());
  out += header_text;
  out += section;
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes, const std::string& source) {
  Reader in(bytes, source);
  if (in.take_bytes(kMagic.size(), "magic") != kMagic) {
    throw CheckpointError(source + ": not a checkpoint file (bad magic)");
  }
  const auto version = in.take<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(source + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = in.take<std::uint64_t>();
  const auto header_text = in.take_bytes(header_len, "header");

  Checkpoint ckpt;
  for (const auto& line : split(header_text, '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError(source + ": corrupt header line '" + line + "'");
    }
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }

  const std::size_t section_begin = in.pos();
  const auto n_arrays = in.take<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_arrays; ++i) {
    NamedArray a;
    a.name = std::string(in.take_bytes(in.take<std::uint32_t>(), "array name"));
    const auto rank = in.take<std::uint32_t>();
    for (std::uint32_t r = 0; r < rank; ++r) a.shape.push_back(in.take<std::uint64_t>());
    const auto count = in.take<std::uint64_t>();
    if (count != shape_size(a.shape)) {
      throw CheckpointError(source + ": array " + a.name + " count does not match its shape");
    }
    const auto raw = in.take_bytes(count * sizeof(double), "array values");
    a.values.resize(count);
    std::memcpy(a.values.data(), raw.data(), raw.size());
    ckpt.arrays.push_back(std::move(a));
  }
  if (!in.done()) throw CheckpointError(source + ": trailing bytes after array section");

  const auto expected = ckpt.get("content_hash");
  const auto actual = hash_section(bytes.substr(section_begin));
  if (expected != actual) {
    throw CheckpointError(source + ": content hash mismatch (header " + expected + ", data " +
                          actual + ")");
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file(path, serialize_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const InputError& e) {
    throw CheckpointError(e.what());
  }
  return parse_checkpoint(bytes, path.string());
}

std::vector<NamedArray> capture_parameters(const ParameterSet& params) {
  std::vector<NamedArray> out;
  out.reserve(params.size());
  for (const auto& p : params.items()) {
    out.push_back({p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}});
  }
  return out;
}

std::size_t restore_parameters(const ParameterSet& target, const Checkpoint& checkpoint,
                               std::span<const std::string> prefixes) {
  std::size_t loaded = 0;
  for (const auto& p : target.items()) {
    bool wanted = false;
    for (const auto& prefix : prefixes) wanted = wanted || p.name.starts_with(prefix);
    if (!wanted) continue;
    const NamedArray* a = checkpoint.find(p.name);
    if (a == nullptr) throw CheckpointError("checkpoint has no array named " + p.name);
    if (a->shape != p.tensor.shape()) {
      throw CheckpointError("dimension mismatch for " + p.name + ": checkpoint " +
                            shape_string(a->shape) + ", model " + shape_string(p.tensor.shape()));
    }
    Tensor handle = p.tensor;
    std::copy(a->values.begin(), a->values.end(), handle.mutable_data().begin());
    ++loaded;
  }
  return loaded;
}

void write_backbone_header(std::map<std::string, std::string>& header,
                           const BackboneConfig& config) {
  header["vocab_size"] = std::to_string(config.vocab_size);
  header["d_model"] = std::to_string(config.d_model);
  header["n_layers"] = std::to_string(config.n_layers);
  header["n_heads"] = std::to_string(config.n_heads);
  header["d_ff"] = std::to_string(config.d_ff);
  header["max_seq_len"] = std::to_string(config.max_seq_len);
  header["dropout_p"] = format_double(config.dropout_p);
}

BackboneConfig backbone_from_header(const Checkpoint& checkpoint) {
  BackboneConfig config;
  try {
    config.vocab_size = parse_size(checkpoint.get("vocab_size"));
    config.d_model = parse_size(checkpoint.get("d_model"));
    config.n_layers = parse_size(checkpoint.get("n_layers"));
    config.n_heads = parse_size(checkpoint.get("n_heads"));
    config.d_ff = parse_size(checkpoint.get("d_ff"));
    config.max_seq_len = parse_size(checkpoint.get("max_seq_len"));
    config.dropout_p = parse_double(checkpoint.get("dropout_p"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const InputError& e) {
    throw CheckpointError(std::string("corrupt architecture header: ") + e.what());
  }
  return config;
}

void require_architecture(const Checkpoint& checkpoint, const BackboneConfig& expected) {
  const BackboneConfig actual = backbone_from_header(checkpoint);
  auto check = [](const char* field, std::size_t got, std::size_t want) {
    if (got != want) {
      throw CheckpointError(std::string("dimension mismatch: checkpoint ") + field + "=" +
                            std::to_string(got) + ", expected " + std::to_string(want));
    }
  };
  check("d_model", actual.d_model, expected.d_model);
  check("vocab_size", actual.vocab_size, expected.vocab_size);
  check("n_layers", actual.n_layers, expected.n_layers);
  check("n_heads", actual.n_heads, expected.n_heads);
  check("d_ff", actual.d_ff, expected.d_ff);
  check("max_seq_len", actual.max_seq_len, expected.max_seq_len);
}

}  // namespace clarify
