#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace ctrlbench {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a master seed and up to three
// stream identifiers. Used everywhere a component needs its own rng.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc908ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

inline std::uint64_t stream_id(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline Rng make_rng(std::uint64_t master, std::string_view name,
                    std::uint64_t a = 0, std::uint64_t b = 0) {
  return Rng(derive_seed(master, stream_id(name), a, b));
}

inline double clip(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

inline double gaussian(Rng& rng) {
  return std::normal_distribution<double>{}(rng);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>{lo, hi}(rng);
}

// SHA-1, used for content-addressed manifest hashes.
class Sha1 {
 public:
  Sha1() { reset(); }

  void reset() {
    h_[0] = 0x67452301u; h_[1] = 0xEFCDAB89u; h_[2] = 0x98BADCFEu;
    h_[3] = 0x10325476u; h_[4] = 0xC3D2E1F0u;
    len_ = 0;
    buf_used_ = 0;
  }

  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    len_ += n;
    while (n > 0) {
      std::size_t take = 64 - buf_used_;
      if (take > n) take = n;
      for (std::size_t i = 0; i < take; ++i) buf_[buf_used_ + i] = p[i];
      buf_used_ += take;
      p += take;
      n -= take;
      if (buf_used_ == 64) {
        process_block(buf_);
        buf_used_ = 0;
      }
    }
  }

  std::string hex_digest() {
    std::uint64_t bit_len = len_ * 8;
    unsigned char pad[72];
    std::size_t pad_len = (buf_used_ < 56) ? (56 - buf_used_) : (120 - buf_used_);
    pad[0] = 0x80;
    for (std::size_t i = 1; i < pad_len; ++i) pad[i] = 0;
    for (int i = 0; i < 8; ++i)
      pad[pad_len + i] = static_cast<unsigned char>(bit_len >> (56 - 8 * i));
    update(pad, pad_len + 8);
    static const char* kHex = "0123456789abcdef";
    std::string out(40, '0');
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) {
        unsigned char byte = static_cast<unsigned char>(h_[i] >> (24 - 8 * j));
        out[i * 8 + j * 2] = kHex[byte >> 4];
        out[i * 8 + j * 2 + 1] = kHex[byte & 0xf];
      }
    return out;
  }

 private:
  static std::uint32_t rol(std::uint32_t v, int n) {
    return (v << n) | (v >> (32 - n));
  }

  void process_block(const unsigned char* block) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t(block[i * 4]) << 24) |
             (std::uint32_t(block[i * 4 + 1]) << 16) |
             (std::uint32_t(block[i * 4 + 2]) << 8) |
             std::uint32_t(block[i * 4 + 3]);
    for (int i = 16; i < 80; ++i)
      w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
      e = d; d = c; c = rol(b, 30); b = a; a = tmp;
    }
    h_[0] += a; h_[1] += b; h_[2] += c; h_[3] += d; h_[4] += e;
  }

  std::uint32_t h_[5];
  std::uint64_t len_ = 0;
  unsigned char buf_[64];
  std::size_t buf_used_ = 0;
};

// git blob convention: sha1("blob <len>\0<content>")
inline std::string git_blob_hash(const std::string& content) {
  Sha1 h;
  std::string header = "blob " + std::to_string(content.size());
  h.update(header.data(), header.size() + 1);  // includes the trailing NUL
  h.update(content.data(), content.size());
  return h.hex_digest();
}

}  // namespace ctrlbench
