// Copyright 2026 The qkd2way Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Classical messages, their wire framing, and the transcript file format.
//
// Frame:      u32 BE payload length | u8 kind | payload | u32 MAC (always 0)
// Transcript: "QKDT" | u16 BE version | { u8 direction | frame }*
//
// Integers inside payloads are little-endian. Bit strings are packed LSB
// first, eight per byte; basis strings four per byte.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <ios>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qkd2way {

enum class MessageKind : std::uint8_t {
    basis_announce = 1,
    test_reveal = 2,
    test_verdict = 3,
    pairing_seed = 4,
    pair_parity = 5,
    keep_mask = 6,
    pec_grouping = 7,
    codeword_mask = 8,
    abort = 9,
    done = 10,
};

inline std::string_view to_string(MessageKind k) {
    switch (k) {
        case MessageKind::basis_announce: return "BASIS_ANNOUNCE";
        case MessageKind::test_reveal: return "TEST_REVEAL";
        case MessageKind::test_verdict: return "TEST_VERDICT";
        case MessageKind::pairing_seed: return "PAIRING_SEED";
        case MessageKind::pair_parity: return "PAIR_PARITY";
        case MessageKind::keep_mask: return "KEEP_MASK";
        case MessageKind::pec_grouping: return "PEC_GROUPING";
        case MessageKind::codeword_mask: return "CODEWORD_MASK";
        case MessageKind::abort: return "ABORT";
        case MessageKind::done: return "DONE";
    }
    return "UNKNOWN";
}

inline bool is_known_kind(std::uint8_t k) { return k >= 1 && k <= 10; }

struct Message {
    MessageKind kind = MessageKind::done;
    std::vector<std::uint8_t> payload;

    bool operator==(const Message&) const = default;
};

/// Base of all session failures other than a protocol-level ABORT.
class SessionError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The byte stream or peer went away.
class TransportError : public SessionError {
  public:
    using SessionError::SessionError;
};

/// Malformed frames, truncated transcripts, or a replay that diverges.
class ValidationError : public SessionError {
  public:
    using SessionError::SessionError;
};

inline constexpr std::size_t kFrameHeaderBytes = 5;
inline constexpr std::size_t kMacBytes = 4;
inline constexpr std::uint16_t kTranscriptVersion = 1;
inline constexpr std::array<std::uint8_t, 4> kTranscriptMagic = {'Q', 'K', 'D', 'T'};

/// Appends little-endian fields and packed bit strings.
class PayloadWriter {
  public:
    PayloadWriter& u8(std::uint8_t v) {
        bytes_.push_back(v);
        return *this;
    }
    PayloadWriter& u32(std::uint32_t v) { return le(v, 4); }
    PayloadWriter& u64(std::uint64_t v) { return le(v, 8); }

    /// u64 count followed by the bits (each entry 0 or 1).
    PayloadWriter& bits(std::span<const std::uint8_t> values) {
        u64(values.size());
        std::size_t start = bytes_.size();
        bytes_.resize(start + (values.size() + 7) / 8, 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            bytes_[start + i / 8] |= static_cast<std::uint8_t>((values[i] & 1u) << (i % 8));
        }
        return *this;
    }

    /// u64 count followed by 2-bit symbols.
    PayloadWriter& symbols2(std::span<const std::uint8_t> values) {
        u64(values.size());
        std::size_t start = bytes_.size();
        bytes_.resize(start + (values.size() + 3) / 4, 0);
        for (std::size_t i = 0; i < values.size(); ++i) {
            bytes_[start + i / 4] |= static_cast<std::uint8_t>((values[i] & 3u) << (2 * (i % 4)));
        }
        return *this;
    }

    std::vector<std::uint8_t> take() { return std::move(bytes_); }

  private:
    PayloadWriter& le(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) {
            bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
        return *this;
    }
    std::vector<std::uint8_t> bytes_;
};

/// Reads what PayloadWriter wrote; any overrun or trailing byte is a ValidationError.
class PayloadReader {
  public:
    explicit PayloadReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
    std::uint64_t u64() { return le(8); }

    std::vector<std::uint8_t> bits() {
        const std::uint64_t n = u64();
        need((n + 7) / 8);
        std::vector<std::uint8_t> out(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            out[i] = (bytes_[pos_ + i / 8] >> (i % 8)) & 1u;
        }
        pos_ += (n + 7) / 8;
        return out;
    }

    std::vector<std::uint8_t> symbols2() {
        const std::uint64_t n = u64();
        need((n + 3) / 4);
        std::vector<std::uint8_t> out(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            out[i] = (bytes_[pos_ + i / 4] >> (2 * (i % 4))) & 3u;
        }
        pos_ += (n + 3) / 4;
        return out;
    }

    void finish() const {
        if (pos_ != bytes_.size()) {
            throw ValidationError("payload has trailing bytes");
        }
    }

  private:
    void need(std::uint64_t n) const {
        if (n > bytes_.size() - pos_) {
            throw ValidationError("payload truncated");
        }
    }
    std::uint64_t le(int n) {
        need(static_cast<std::uint64_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline void append_frame(std::vector<std::uint8_t>& out, const Message& m) {
    if (m.payload.size() > 0xFFFFFFFFull) {
        throw ValidationError("payload exceeds 2^32 - 1 bytes");
    }
    const auto n = static_cast<std::uint32_t>(m.payload.size());
    out.push_back(static_cast<std::uint8_t>(n >> 24));
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
    out.push_back(static_cast<std::uint8_t>(m.kind));
    out.insert(out.end(), m.payload.begin(), m.payload.end());
    out.insert(out.end(), kMacBytes, 0);
}

inline std::vector<std::uint8_t> encode_frame(const Message& m) {
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderBytes + m.payload.size() + kMacBytes);
    append_frame(out, m);
    return out;
}

inline std::uint32_t frame_payload_length(std::span<const std::uint8_t, kFrameHeaderBytes> header) {
    return (std::uint32_t{header[0]} << 24) | (std::uint32_t{header[1]} << 16) | (std::uint32_t{header[2]} << 8) |
           std::uint32_t{header[3]};
}

inline MessageKind frame_kind(std::uint8_t k) {
    if (!is_known_kind(k)) {
        throw ValidationError("unknown message kind " + std::to_string(k));
    }
    return static_cast<MessageKind>(k);
}

/// Parses one frame at `pos`, advancing it.
inline Message decode_frame(std::span<const std::uint8_t> bytes, std::size_t& pos) {
    if (bytes.size() - pos < kFrameHeaderBytes) {
        throw ValidationError("truncated frame header");
    }
    const std::uint32_t n = frame_payload_length(bytes.subspan(pos).first<kFrameHeaderBytes>());
    Message m;
    m.kind = frame_kind(bytes[pos + 4]);
    if (bytes.size() - pos - kFrameHeaderBytes < std::uint64_t{n} + kMacBytes) {
        throw ValidationError("truncated frame body");
    }
    const auto body = bytes.subspan(pos + kFrameHeaderBytes, n);
    m.payload.assign(body.begin(), body.end());
    for (std::size_t i = 0; i < kMacBytes; ++i) {
        if (bytes[pos + kFrameHeaderBytes + n + i] != 0) {
            throw ValidationError("nonzero MAC field");
        }
    }
    pos += kFrameHeaderBytes + n + kMacBytes;
    return m;
}

enum class Direction : std::uint8_t { alice_to_bob = 0, bob_to_alice = 1 };

struct TranscriptEntry {
    Direction direction = Direction::alice_to_bob;
    Message message;

    bool operator==(const TranscriptEntry&) const = default;
};

struct SessionTranscript {
    std::vector<TranscriptEntry> entries;

    bool operator==(const SessionTranscript&) const = default;
};

inline std::vector<std::uint8_t> serialize(const SessionTranscript& t) {
    std::vector<std::uint8_t> out(kTranscriptMagic.begin(), kTranscriptMagic.end());
    out.push_back(static_cast<std::uint8_t>(kTranscriptVersion >> 8));
    out.push_back(static_cast<std::uint8_t>(kTranscriptVersion));
    for (const auto& e : t.entries) {
        out.push_back(static_cast<std::uint8_t>(e.direction));
        append_frame(out, e.message);
    }
    return out;
}

inline SessionTranscript deserialize_transcript(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 6 || !std::equal(kTranscriptMagic.begin(), kTranscriptMagic.end(), bytes.begin())) {
        throw ValidationError("not a transcript: bad magic");
    }
    const std::uint16_t version = static_cast<std::uint16_t>((bytes[4] << 8) | bytes[5]);
    if (version != kTranscriptVersion) {
        throw ValidationError("unsupported transcript version " + std::to_string(version));
    }
    SessionTranscript t;
    std::size_t pos = 6;
    while (pos < bytes.size()) {
        const std::uint8_t dir = bytes[pos++];
        if (dir > 1) {
            throw ValidationError("bad direction byte");
        }
        t.entries.push_back({static_cast<Direction>(dir), decode_frame(bytes, pos)});
    }
    return t;
}

inline void write_transcript_file(const std::string& path, const SessionTranscript& t) {
    const auto bytes = serialize(t);
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::ios_base::failure("cannot write " + path);
    }
}

inline SessionTranscript read_transcript_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::ios_base::failure("cannot open " + path);
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_transcript(bytes);
}

}  // namespace qkd2way
