#include "dmicf/checkpoint.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace dmicf {

namespace {

constexpr const char* kMagic = "dmicf-checkpoint";

void append_double(std::string& out, double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw CheckpointError("checkpoint: cannot format value");
  out.append(buf.data(), end);
}

double parse_double(const std::string& token, std::size_t line) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw CheckpointError("checkpoint line " + std::to_string(line) + ": bad value '" + token +
                          "'");
  }
  return v;
}

}  // namespace

std::string checkpoint_to_string(const std::vector<NamedTensor>& tensors) {
  std::string out;
  out += kMagic;
  out += ' ' + std::to_string(kCheckpointVersion) + '\n';
  out += "count " + std::to_string(tensors.size()) + '\n';
  for (const auto& [name, t] : tensors) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw CheckpointError("checkpoint: invalid tensor name '" + name + "'");
    }
    out += "tensor " + name + ' ' + std::to_string(t.rows()) + ' ' + std::to_string(t.cols()) +
           '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
      for (std::size_t c = 0; c < t.cols(); ++c) {
        if (c) out += ' ';
        append_double(out, t(r, c));
      }
      out += '\n';
    }
  }
  out += "end\n";
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  const std::string text = checkpoint_to_string(tensors);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CheckpointError("cannot open checkpoint for writing: " + path.string());
  f << text;
  if (!f) throw CheckpointError("write failed: " + path.string());
}

std::vector<NamedTensor> checkpoint_from_string(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw CheckpointError("checkpoint: unexpected end of file");
    ++line_no;
    return line;
  };

  {
    std::istringstream header(next_line());
    std::string magic;
    int version = 0;
    if (!(header >> magic >> version) || magic != kMagic) {
      throw CheckpointError("checkpoint: missing '" + std::string(kMagic) + "' header");
    }
    if (version != kCheckpointVersion) {
      throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    }
  }
  std::size_t count = 0;
  {
    std::istringstream hdr(next_line());
    std::string key;
    if (!(hdr >> key >> count) || key != "count") {
      throw CheckpointError("checkpoint line " + std::to_string(line_no) + ": expected count");
    }
  }

  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::istringstream hdr(next_line());
    std::string key, name;
    std::size_t rows = 0, cols = 0;
    if (!(hdr >> key >> name >> rows >> cols) || key != "tensor") {
      throw CheckpointError("checkpoint line " + std::to_string(line_no) +
                            ": expected 'tensor <name> <rows> <cols>'");
    }
    Tensor2 t(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::istringstream row(next_line());
      std::string tok;
      std::size_t c = 0;
      while (row >> tok) {
        if (c >= cols) {
          throw CheckpointError("checkpoint line " + std::to_string(line_no) +
                                ": too many values for " + name);
        }
        t(r, c++) = parse_double(tok, line_no);
      }
      if (c != cols) {
        throw CheckpointError("checkpoint line " + std::to_string(line_no) +
                              ": too few values for " + name);
      }
    }
    tensors.push_back({name, std::move(t)});
  }
  if (next_line() != "end") throw CheckpointError("checkpoint: missing 'end' trailer");
  return tensors;
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace dmicf
