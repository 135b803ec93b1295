#include "carmic/audio_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <iterator>

#include <fmt/core.h>

namespace carmic {

void stderr_warning(const std::string& message) {
  std::cerr << "warning: " << message << '\n';
}

void AudioBuffer::validate() const {
  if (sample_rate <= 0) {
    throw Error(fmt::format("invalid sample rate {}", sample_rate));
  }
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(samples[i])) {
      throw Error(fmt::format("non-finite sample at index {}", i));
    }
  }
}

void ImpulseResponse::validate() const {
  if (audio.empty()) {
    throw Error(fmt::format("impulse response '{}' is empty", label));
  }
  audio.validate();
}

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& bytes, std::size_t begin, std::size_t end)
      : bytes_(bytes), pos_(begin), end_(end) {}

  std::size_t remaining() const { return end_ - pos_; }
  std::size_t position() const { return pos_; }

  void require(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw Error(fmt::format("truncated WAV: {} needs {} bytes, {} left", what, n, remaining()));
    }
  }
  std::uint16_t u16(const char* what) {
    require(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string tag(const char* what) {
    require(4, what);
    std::string t(reinterpret_cast<const char*>(&bytes_[pos_]), 4);
    pos_ += 4;
    return t;
  }
  void skip(std::size_t n, const char* what) {
    require(n, what);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_;
  std::size_t end_;
};

struct FormatChunk {
  std::uint16_t format_tag = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits_per_sample = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

}  // namespace

AudioBuffer parse_wav(const std::vector<std::uint8_t>& bytes, const WarningSink& warn) {
  ByteReader header(bytes, 0, bytes.size());
  if (header.tag("RIFF id") != "RIFF") throw Error("not a RIFF file");
  const std::uint32_t riff_size = header.u32("RIFF size");
  if (header.tag("WAVE id") != "WAVE") throw Error("RIFF file is not WAVE");
  if (static_cast<std::uint64_t>(riff_size) + 8 > bytes.size()) {
    throw Error(fmt::format("truncated WAV: RIFF declares {} bytes, file has {}",
                            static_cast<std::uint64_t>(riff_size) + 8, bytes.size()));
  }

  ByteReader chunks(bytes, 12, static_cast<std::size_t>(riff_size) + 8);
  FormatChunk fmt_chunk;
  bool have_fmt = false;
  std::size_t data_begin = 0;
  std::size_t data_size = 0;
  bool have_data = false;

  while (chunks.remaining() > 0) {
    const std::string id = chunks.tag("chunk id");
    const std::uint32_t size = chunks.u32("chunk size");
    const std::size_t body = chunks.position();
    chunks.require(size, "chunk body");
    if (id == "fmt ") {
      if (size < 16) throw Error("malformed WAV: fmt chunk shorter than 16 bytes");
      ByteReader f(bytes, body, body + size);
      fmt_chunk.format_tag = f.u16("format tag");
      fmt_chunk.channels = f.u16("channel count");
      fmt_chunk.sample_rate = f.u32("sample rate");
      f.u32("byte rate");
      fmt_chunk.block_align = f.u16("block align");
      fmt_chunk.bits_per_sample = f.u16("bits per sample");
      if (fmt_chunk.format_tag == kFormatExtensible) {
        if (size < 40) throw Error("malformed WAV: short WAVE_FORMAT_EXTENSIBLE fmt chunk");
        f.u16("cbSize");
        f.u16("valid bits");
        f.u32("channel mask");
        // The first two bytes of the subformat GUID carry the real format tag.
        fmt_chunk.format_tag = f.u16("subformat");
      }
      have_fmt = true;
    } else if (id == "data") {
      data_begin = body;
      data_size = size;
      have_data = true;
    }
    chunks.skip(size, "chunk body");
    if ((size & 1u) && chunks.remaining() > 0) chunks.skip(1, "chunk pad byte");
  }

  if (!have_fmt) throw Error("malformed WAV: missing fmt chunk");
  if (!have_data) throw Error("malformed WAV: missing data chunk");
  if (fmt_chunk.channels == 0) throw Error("malformed WAV: zero channels");
  if (fmt_chunk.sample_rate == 0) throw Error("malformed WAV: zero sample rate");

  const bool pcm16 = fmt_chunk.format_tag == kFormatPcm && fmt_chunk.bits_per_sample == 16;
  const bool float32 = fmt_chunk.format_tag == kFormatFloat && fmt_chunk.bits_per_sample == 32;
  if (!pcm16 && !float32) {
    throw Error(fmt::format("unsupported WAV encoding: format tag {} with {} bits",
                            fmt_chunk.format_tag, fmt_chunk.bits_per_sample));
  }
  const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
  const std::size_t frame = bytes_per_sample * fmt_chunk.channels;
  if (fmt_chunk.block_align != frame) {
    throw Error(fmt::format("malformed WAV: block align {} does not match {} channels",
                            fmt_chunk.block_align, fmt_chunk.channels));
  }
  if (data_size == 0) throw Error("WAV data chunk is empty");
  if (data_size % frame != 0) throw Error("malformed WAV: partial sample frame in data chunk");
  if (fmt_chunk.channels > 1) {
    warn(fmt::format("WAV has {} channels; using channel 0", fmt_chunk.channels));
  }

  AudioBuffer out;
  out.sample_rate = static_cast<int>(fmt_chunk.sample_rate);
  const std::size_t frames = data_size / frame;
  out.samples.resize(frames);
  const std::uint8_t* p = bytes.data() + data_begin;
  for (std::size_t i = 0; i < frames; ++i, p += frame) {
    if (pcm16) {
      const auto raw = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      out.samples[i] = raw / 32768.0;
    } else {
      float v;
      std::memcpy(&v, p, 4);
      out.samples[i] = v;
    }
  }
  out.validate();
  return out;
}

AudioBuffer read_wav(const std::filesystem::path& path, const WarningSink& warn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open WAV file {}", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return parse_wav(bytes, warn);
  } catch (const Error& e) {
    throw Error(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::uint8_t> encode_wav(const AudioBuffer& buffer, WavFormat format,
                                     const WarningSink& warn) {
  buffer.validate();
  const std::uint16_t bits = format == WavFormat::Pcm16 ? 16 : 32;
  const std::uint16_t tag = format == WavFormat::Pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint16_t block = bits / 8;
  const std::uint64_t data_size = static_cast<std::uint64_t>(buffer.size()) * block;
  if (data_size + 36 > 0xFFFFFFFFull) throw Error("buffer too long for a RIFF/WAVE file");

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_size));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, tag);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buffer.sample_rate) * block);
  put_u16(out, block);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_size));

  std::size_t over = 0;
  for (double s : buffer.samples) {
    if (std::abs(s) > 1.0) ++over;
    if (format == WavFormat::Pcm16) {
      const double scaled = std::clamp(std::nearbyint(s * 32768.0), -32768.0, 32767.0);
      put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
    } else {
      const float f = static_cast<float>(s);
      std::uint32_t raw;
      std::memcpy(&raw, &f, 4);
      put_u32(out, raw);
    }
  }
  if (over > 0) {
    warn(fmt::format("{} sample(s) exceed full scale{}", over,
                     format == WavFormat::Pcm16 ? " and were saturated" : ""));
  }
  return out;
}

void write_wav(const std::filesystem::path& path, const AudioBuffer& buffer, WavFormat format,
               const WarningSink& warn) {
  const auto bytes = encode_wav(buffer, format, warn);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(fmt::format("cannot create WAV file {}", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(fmt::format("write failed for {}", path.string()));
}

}  // namespace carmic
