#include "stereoagg/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <sstream>
#include <vector>

#include "stereoagg/image_io.hpp"

namespace stereoagg {

namespace {

constexpr const char* kMagic = "STEREOAGG-CHECKPOINT";

void append_floats(std::vector<float>& block, const ArrayX<float>& values) {
  block.insert(block.end(), values.data(), values.data() + values.size());
}

std::string shape_fields(const Shape& shape) {
  std::string out = std::to_string(shape.size());
  for (Index e : shape) out += " " + std::to_string(e);
  return out;
}

class LineReader {
 public:
  explicit LineReader(const std::string& bytes) : bytes_(bytes) {}

  std::string line() {
    const std::size_t end = bytes_.find('\n', pos_);
    if (end == std::string::npos) throw ParseError("unterminated line in checkpoint index", pos_);
    start_ = pos_;
    std::string out = bytes_.substr(pos_, end - pos_);
    pos_ = end + 1;
    return out;
  }

  std::string raw(std::size_t count) {
    if (bytes_.size() - pos_ < count) throw ParseError("checkpoint truncated", bytes_.size());
    start_ = pos_;
    std::string out = bytes_.substr(pos_, count);
    pos_ += count;
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, start_); }

  std::size_t position() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
  std::size_t start_ = 0;
};

long long to_integer(const std::string& token, const LineReader& reader) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(token, &used);
  } catch (const std::exception&) {
    reader.fail("expected an integer, got '" + token + "'");
  }
  if (used != token.size() || v < 0) reader.fail("expected a non-negative integer, got '" + token + "'");
  return v;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  std::vector<float> block;
  std::ostringstream index;
  index << kMagic << ' ' << Checkpoint::kVersion << '\n';
  index << "iteration " << c.iteration << '\n';
  index << "config " << c.config.size() << '\n' << c.config << '\n';
  for (const auto& [name, t] : c.params.tensors()) {
    index << "param " << name << ' ' << shape_fields(t.shape()) << ' ' << block.size() << '\n';
    append_floats(block, t.values());
  }
  for (const auto& [name, v] : c.rms) {
    const Shape shape = c.params.contains(name) ? c.params.at(name).shape() : Shape{v.size()};
    index << "rms " << name << ' ' << shape_fields(shape) << ' ' << block.size() << '\n';
    append_floats(block, v);
  }
  for (const auto& [name, s] : c.params.norms()) {
    const Index channels = s.initialized ? s.running_mean.size() : 0;
    index << "norm " << name << ' ' << (s.initialized ? 1 : 0) << ' ' << channels << ' ' << block.size() << ' '
          << block.size() + static_cast<std::size_t>(channels) << '\n';
    if (s.initialized) {
      append_floats(block, s.running_mean);
      append_floats(block, s.running_var);
    }
  }
  index << "data " << block.size() << '\n';
  std::string out = index.str();
  const std::size_t header = out.size();
  out.resize(header + block.size() * 4);
  for (std::size_t i = 0; i < block.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(block[i]);
    if constexpr (std::endian::native == std::endian::big) {
      bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
    }
    std::memcpy(out.data() + header + i * 4, &bits, 4);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  LineReader reader(bytes);
  {
    std::istringstream head(reader.line());
    std::string magic;
    int version = 0;
    head >> magic >> version;
    if (magic != kMagic) reader.fail("not a checkpoint file");
    if (version != Checkpoint::kVersion) reader.fail("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  struct Pending {
    std::string kind;
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t var_offset = 0;
    bool initialized = false;
    std::size_t where = 0;
  };
  std::vector<Pending> pending;
  std::size_t data_count = 0;
  bool saw_data = false;
  while (!saw_data) {
    const std::size_t where = reader.position();
    std::istringstream fields(reader.line());
    std::string kind;
    fields >> kind;
    std::vector<std::string> tokens;
    for (std::string t; fields >> t;) tokens.push_back(t);
    auto need = [&](std::size_t n) {
      if (tokens.size() < n) reader.fail("malformed '" + kind + "' entry");
    };
    if (kind == "iteration") {
      need(1);
      c.iteration = static_cast<std::uint64_t>(to_integer(tokens[0], reader));
    } else if (kind == "config") {
      need(1);
      c.config = reader.raw(static_cast<std::size_t>(to_integer(tokens[0], reader)));
      if (reader.raw(1) != "\n") reader.fail("config block not terminated");
    } else if (kind == "param" || kind == "rms") {
      need(3);
      Pending p{kind, tokens[0], {}, 0, 0, false, where};
      const auto rank = static_cast<std::size_t>(to_integer(tokens[1], reader));
      need(3 + rank);
      for (std::size_t k = 0; k < rank; ++k) p.shape.push_back(to_integer(tokens[2 + k], reader));
      p.offset = static_cast<std::size_t>(to_integer(tokens[2 + rank], reader));
      pending.push_back(std::move(p));
    } else if (kind == "norm") {
      need(5);
      Pending p{kind, tokens[0], {to_integer(tokens[2], reader)}, 0, 0, tokens[1] == "1", where};
      p.offset = static_cast<std::size_t>(to_integer(tokens[3], reader));
      p.var_offset = static_cast<std::size_t>(to_integer(tokens[4], reader));
      pending.push_back(std::move(p));
    } else if (kind == "data") {
      need(1);
      data_count = static_cast<std::size_t>(to_integer(tokens[0], reader));
      saw_data = true;
    } else {
      reader.fail("unknown checkpoint entry '" + kind + "'");
    }
  }
  const std::string raw = reader.raw(data_count * 4);
  std::vector<float> block(data_count);
  for (std::size_t i = 0; i < data_count; ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, raw.data() + i * 4, 4);
    if constexpr (std::endian::native == std::endian::big) {
      bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
    }
    block[i] = std::bit_cast<float>(bits);
  }
  if (reader.position() != bytes.size()) throw ParseError("trailing bytes after checkpoint data", reader.position());

  auto slice = [&](const Pending& p, std::size_t offset, Index count) {
    if (offset + static_cast<std::size_t>(count) > block.size()) {
      throw ParseError("entry " + p.name + " points past the data block", p.where);
    }
    return ArrayX<float>(Eigen::Map<const ArrayX<float>>(block.data() + offset, count));
  };
  for (const auto& p : pending) {
    if (p.kind == "param") {
      if (c.params.contains(p.name)) throw ParseError("duplicate parameter " + p.name, p.where);
      c.params.tensors().emplace(p.name, Tensor<float>(p.shape, slice(p, p.offset, shape_numel(p.shape))))
          .first->second.set_requires_grad(true);
    } else if (p.kind == "rms") {
      if (!c.rms.emplace(p.name, slice(p, p.offset, shape_numel(p.shape))).second) {
        throw ParseError("duplicate accumulator " + p.name, p.where);
      }
    } else {
      BatchNormState<float> s;
      s.initialized = p.initialized;
      if (p.initialized) {
        s.running_mean = slice(p, p.offset, p.shape[0]);
        s.running_var = slice(p, p.var_offset, p.shape[0]);
      }
      if (!c.params.norms().emplace(p.name, std::move(s)).second) {
        throw ParseError("duplicate batch-norm state " + p.name, p.where);
      }
    }
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

}  // namespace stereoagg
