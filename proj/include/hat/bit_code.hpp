#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hat/error.hpp"

namespace hat {

/// Bit-packed binary code over {+1,-1}^K. Bit value 1 encodes +1 and 0
/// encodes -1; component j lives at word j/64, bit j%64. Bits at positions
/// >= K are kept zero, so packed-word equality is code equality.
class BitCode {
public:
    BitCode() = default;

    /// Packs a vector of +1/-1 entries; the code length is the vector length.
    static BitCode pack(const std::vector<int>& signs) {
        if (signs.empty()) raise(Errc::invalid_length, "code length must be >= 1");
        BitCode code;
        code.length_ = signs.size();
        code.words_.assign((signs.size() + 63) / 64, 0);
        for (std::size_t j = 0; j < signs.size(); ++j) {
            if (signs[j] == 1) {
                code.words_[j >> 6] |= std::uint64_t{1} << (j & 63);
            } else if (signs[j] != -1) {
                raise(Errc::invalid_sign_value,
                      "entry " + std::to_string(j) + " is " + std::to_string(signs[j]) + ", expected +1 or -1");
            }
        }
        return code;
    }

    /// Builds a code of length k (k <= 64) whose component j is +1 iff bit j
    /// of mask is set. Used by the exhaustive oracle and in tests.
    static BitCode from_bits(std::uint64_t mask, std::size_t k) {
        if (k == 0 || k > 64) raise(Errc::invalid_length, "from_bits supports 1..64 bits");
        BitCode code;
        code.length_ = k;
        code.words_.assign(1, mask & tail_mask(k));
        return code;
    }

    /// Reconstructs a code from ceil(k/8) little-endian bytes (bit j at byte
    /// j/8, bit j%8). Padding bits beyond k are ignored.
    static BitCode from_bytes(std::span<const std::uint8_t> bytes, std::size_t k) {
        if (k == 0) raise(Errc::invalid_length, "code length must be >= 1");
        if (bytes.size() != (k + 7) / 8)
            raise(Errc::length_mismatch, "byte count does not match code length");
        BitCode code;
        code.length_ = k;
        code.words_.assign((k + 63) / 64, 0);
        for (std::size_t i = 0; i < bytes.size(); ++i)
            code.words_[i >> 3] |= static_cast<std::uint64_t>(bytes[i]) << ((i & 7) * 8);
        code.words_.back() &= tail_mask_for_length(k);
        return code;
    }

    static BitCode from_hex(const std::string& hex, std::size_t k) {
        std::vector<std::uint8_t> bytes;
        if (hex.size() % 2 != 0) raise(Errc::format_error, "hex string has odd length");
        bytes.reserve(hex.size() / 2);
        auto nibble = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            raise(Errc::format_error, "invalid hex digit");
        };
        for (std::size_t i = 0; i < hex.size(); i += 2)
            bytes.push_back(static_cast<std::uint8_t>(nibble(hex[i]) * 16 + nibble(hex[i + 1])));
        return from_bytes(bytes, k);
    }

    std::size_t length() const noexcept { return length_; }
    bool empty() const noexcept { return length_ == 0; }

    /// Component j as +1 or -1.
    int sign_at(std::size_t j) const { return (words_[j >> 6] >> (j & 63)) & 1 ? 1 : -1; }

    std::vector<int> unpack() const {
        std::vector<int> signs(length_);
        for (std::size_t j = 0; j < length_; ++j) signs[j] = sign_at(j);
        return signs;
    }

    BitCode negated() const {
        BitCode code = *this;
        for (auto& w : code.words_) w = ~w;
        if (!code.words_.empty()) code.words_.back() &= tail_mask_for_length(length_);
        return code;
    }

    std::span<const std::uint64_t> words() const noexcept { return words_; }

    std::vector<std::uint8_t> to_bytes() const {
        std::vector<std::uint8_t> bytes((length_ + 7) / 8);
        for (std::size_t i = 0; i < bytes.size(); ++i)
            bytes[i] = static_cast<std::uint8_t>(words_[i >> 3] >> ((i & 7) * 8));
        return bytes;
    }

    std::string to_hex() const {
        static constexpr char digits[] = "0123456789abcdef";
        std::string hex;
        for (std::uint8_t b : to_bytes()) {
            hex.push_back(digits[b >> 4]);
            hex.push_back(digits[b & 0xF]);
        }
        return hex;
    }

    friend bool operator==(const BitCode&, const BitCode&) = default;

private:
    static std::uint64_t tail_mask(std::size_t k) {
        return k >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << k) - 1;
    }
    static std::uint64_t tail_mask_for_length(std::size_t k) {
        const std::size_t rem = k & 63;
        return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
    }

    std::size_t length_ = 0;
    std::vector<std::uint64_t> words_;
};

/// Hamming distance |{j : a_j != b_j}| via XOR + popcount.
inline int hamming(const BitCode& a, const BitCode& b) {
    if (a.length() != b.length())
        raise(Errc::length_mismatch, "hamming over codes of lengths " + std::to_string(a.length()) + " and " +
                                         std::to_string(b.length()));
    int distance = 0;
    const auto aw = a.words();
    const auto bw = b.words();
    for (std::size_t i = 0; i < aw.size(); ++i) distance += std::popcount(aw[i] ^ bw[i]);
    return distance;
}

/// Inner product sum_j a_j * b_j in [-K, K]; satisfies 2*hamming + ip == K.
inline int inner_product(const BitCode& a, const BitCode& b) {
    return static_cast<int>(a.length()) - 2 * hamming(a, b);
}

} // namespace hat
