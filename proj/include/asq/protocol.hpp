#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "asq/errors.hpp"
#include "asq/numeric.hpp"

namespace asq::wire {

enum class Tag : std::uint8_t {
    SampleReq = 1,
    SampleResp = 2,
    QueryReq = 3,
    QueryResp = 4,
    NormReq = 5,
    NormResp = 6,
    Error = 7,
    InfoReq = 8,
    InfoResp = 9,
    Close = 10,
};

constexpr std::string_view tag_name(Tag t) {
    switch (t) {
        case Tag::SampleReq: return "SAMPLE_REQ";
        case Tag::SampleResp: return "SAMPLE_RESP";
        case Tag::QueryReq: return "QUERY_REQ";
        case Tag::QueryResp: return "QUERY_RESP";
        case Tag::NormReq: return "NORM_REQ";
        case Tag::NormResp: return "NORM_RESP";
        case Tag::Error: return "ERROR";
        case Tag::InfoReq: return "INFO_REQ";
        case Tag::InfoResp: return "INFO_RESP";
        case Tag::Close: return "CLOSE";
    }
    return "UNKNOWN";
}

inline constexpr std::size_t kHeaderBytes = 1 + 8;     // tag + session id
inline constexpr std::size_t kMaxErrorText = 256;
inline constexpr std::size_t kMaxFrameBytes = 4096;    // bound on the length field

/// Payload bytes for each fixed-size tag; ERROR is variable (u32 code, u16 length, text).
constexpr std::optional<std::size_t> payload_size(Tag t) {
    switch (t) {
        case Tag::SampleReq: return 0;
        case Tag::SampleResp: return 1 + 8;
        case Tag::QueryReq: return 8 + 8;
        case Tag::QueryResp: return 8 + 8;
        case Tag::NormReq: return 8;
        case Tag::NormResp: return 8;
        case Tag::InfoReq: return 0;
        case Tag::InfoResp: return 8 + 8 + 8;
        case Tag::Close: return 0;
        case Tag::Error: return std::nullopt;
    }
    return std::nullopt;
}

/// One decoded frame. Only the fields of its tag are meaningful:
///   SAMPLE_RESP success, index    QUERY_REQ index, eps    QUERY_RESP value
///   NORM_REQ eps                  NORM_RESP scalar        INFO_RESP dim, phi, scalar (= ||x||_1)
///   ERROR code, text
struct Message {
    Tag tag = Tag::SampleReq;
    std::uint64_t session = 0;
    bool success = false;
    std::uint64_t index = 0;
    double eps = 0.0;
    cplx value{};
    double scalar = 0.0;
    std::uint64_t dim = 0;
    double phi = 1.0;
    std::uint32_t code = 0;
    std::string text{};

    friend bool operator==(const Message &, const Message &) = default;
};

inline Message sample_req(std::uint64_t s) { return {.tag = Tag::SampleReq, .session = s}; }
inline Message sample_resp(std::uint64_t s, bool ok, std::uint64_t i) {
    return {.tag = Tag::SampleResp, .session = s, .success = ok, .index = ok ? i : 0};
}
inline Message query_req(std::uint64_t s, std::uint64_t i, double eps) {
    return {.tag = Tag::QueryReq, .session = s, .index = i, .eps = eps};
}
inline Message query_resp(std::uint64_t s, cplx v) { return {.tag = Tag::QueryResp, .session = s, .value = v}; }
inline Message norm_req(std::uint64_t s, double eps) { return {.tag = Tag::NormReq, .session = s, .eps = eps}; }
inline Message norm_resp(std::uint64_t s, double v) { return {.tag = Tag::NormResp, .session = s, .scalar = v}; }
inline Message info_req(std::uint64_t s) { return {.tag = Tag::InfoReq, .session = s}; }
inline Message info_resp(std::uint64_t s, std::uint64_t dim, double phi, double one_norm) {
    return {.tag = Tag::InfoResp, .session = s, .scalar = one_norm, .dim = dim, .phi = phi};
}
inline Message close_msg(std::uint64_t s) { return {.tag = Tag::Close, .session = s}; }
inline Message error_msg(std::uint64_t s, ErrorCode c, std::string text) {
    if (text.size() > kMaxErrorText) text.resize(kMaxErrorText);
    return {.tag = Tag::Error, .session = s, .code = static_cast<std::uint32_t>(c), .text = std::move(text)};
}

namespace detail {

inline void put(std::string &out, std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}
inline void put_f64(std::string &out, double v) { put(out, std::bit_cast<std::uint64_t>(v), 8); }

struct Reader {
    const unsigned char *p;
    std::size_t left;

    std::uint64_t get(int bytes) {
        if (left < static_cast<std::size_t>(bytes)) throw Error(ErrorCode::MalformedFrame, "truncated payload");
        std::uint64_t v = 0;
        for (int b = bytes - 1; b >= 0; --b) v = (v << 8) | p[b];
        p += bytes;
        left -= static_cast<std::size_t>(bytes);
        return v;
    }
    double get_f64() { return std::bit_cast<double>(get(8)); }
};

}  // namespace detail

/// Full frame: u32 LE length of everything after it, u8 tag, u64 LE session, payload.
inline std::string encode(const Message &m) {
    std::string body;
    body.push_back(static_cast<char>(m.tag));
    detail::put(body, m.session, 8);
    switch (m.tag) {
        case Tag::SampleReq:
        case Tag::InfoReq:
        case Tag::Close: break;
        case Tag::SampleResp:
            body.push_back(m.success ? 1 : 0);
            detail::put(body, m.success ? m.index : 0, 8);
            break;
        case Tag::QueryReq:
            detail::put(body, m.index, 8);
            detail::put_f64(body, m.eps);
            break;
        case Tag::QueryResp:
            detail::put_f64(body, m.value.real());
            detail::put_f64(body, m.value.imag());
            break;
        case Tag::NormReq: detail::put_f64(body, m.eps); break;
        case Tag::NormResp: detail::put_f64(body, m.scalar); break;
        case Tag::InfoResp:
            detail::put(body, m.dim, 8);
            detail::put_f64(body, m.phi);
            detail::put_f64(body, m.scalar);
            break;
        case Tag::Error: {
            const std::size_t n = std::min(m.text.size(), kMaxErrorText);
            detail::put(body, m.code, 4);
            detail::put(body, n, 2);
            body.append(m.text, 0, n);
            break;
        }
        default: throw Error(ErrorCode::MalformedFrame, "unknown tag");
    }
    std::string frame;
    frame.reserve(4 + body.size());
    detail::put(frame, body.size(), 4);
    frame += body;
    return frame;
}

/// Decodes the bytes after the length field. Throws MalformedFrame on any inconsistency.
inline Message decode_body(std::string_view body) {
    if (body.size() < kHeaderBytes) throw Error(ErrorCode::MalformedFrame, "frame shorter than header");
    detail::Reader r{reinterpret_cast<const unsigned char *>(body.data()), body.size()};
    Message m;
    const auto raw_tag = static_cast<std::uint8_t>(r.get(1));
    if (raw_tag < 1 || raw_tag > 10) throw Error(ErrorCode::MalformedFrame, "unknown tag " + std::to_string(raw_tag));
    m.tag = static_cast<Tag>(raw_tag);
    m.session = r.get(8);
    if (auto want = payload_size(m.tag); want && r.left != *want)
        throw Error(ErrorCode::MalformedFrame, std::string(tag_name(m.tag)) + " payload has wrong length");
    switch (m.tag) {
        case Tag::SampleReq:
        case Tag::InfoReq:
        case Tag::Close: break;
        case Tag::SampleResp: {
            const auto flag = r.get(1);
            if (flag > 1) throw Error(ErrorCode::MalformedFrame, "success flag must be 0 or 1");
            m.success = flag == 1;
            m.index = r.get(8);
            if (!m.success && m.index != 0) throw Error(ErrorCode::MalformedFrame, "failed sample carries an index");
            break;
        }
        case Tag::QueryReq:
            m.index = r.get(8);
            m.eps = r.get_f64();
            break;
        case Tag::QueryResp: {
            const double re = r.get_f64();
            m.value = {re, r.get_f64()};
            break;
        }
        case Tag::NormReq: m.eps = r.get_f64(); break;
        case Tag::NormResp: m.scalar = r.get_f64(); break;
        case Tag::InfoResp:
            m.dim = r.get(8);
            m.phi = r.get_f64();
            m.scalar = r.get_f64();
            break;
        case Tag::Error: {
            m.code = static_cast<std::uint32_t>(r.get(4));
            const auto n = static_cast<std::size_t>(r.get(2));
            if (n > kMaxErrorText || r.left != n) throw Error(ErrorCode::MalformedFrame, "bad error text length");
            m.text.assign(reinterpret_cast<const char *>(r.p), n);
            r.left = 0;
            break;
        }
    }
    return m;
}

inline Message decode(std::string_view frame) {
    if (frame.size() < 4) throw Error(ErrorCode::MalformedFrame, "missing length prefix");
    detail::Reader r{reinterpret_cast<const unsigned char *>(frame.data()), 4};
    const auto len = r.get(4);
    if (len != frame.size() - 4) throw Error(ErrorCode::MalformedFrame, "length prefix disagrees with frame size");
    return decode_body(frame.substr(4));
}

/// Splits a byte stream into frames. Each popped frame still carries its length prefix.
class FrameBuffer {
public:
    void append(std::string_view bytes) { buf_.append(bytes); }

    /// Next complete frame, if buffered. A length above kMaxFrameBytes cannot be resynchronized
    /// and aborts the stream.
    std::optional<std::string> next() {
        if (buf_.size() - pos_ < 4) {
            compact();
            return std::nullopt;
        }
        detail::Reader r{reinterpret_cast<const unsigned char *>(buf_.data() + pos_), 4};
        const auto len = static_cast<std::size_t>(r.get(4));
        if (len > kMaxFrameBytes) throw Error(ErrorCode::SessionAbort, "frame length " + std::to_string(len));
        if (buf_.size() - pos_ < 4 + len) {
            compact();
            return std::nullopt;
        }
        std::string frame = buf_.substr(pos_, 4 + len);
        pos_ += 4 + len;
        return frame;
    }

    std::size_t pending() const noexcept { return buf_.size() - pos_; }

private:
    void compact() {
        if (pos_ > 0) {
            buf_.erase(0, pos_);
            pos_ = 0;
        }
    }

    std::string buf_;
    std::size_t pos_ = 0;
};

/// Summary of a recorded frame stream checked against the allowed wire surface.
struct TranscriptReport {
    std::uint64_t frames = 0;
    std::map<Tag, std::uint64_t> by_tag;
    std::vector<std::string> violations;

    bool clean() const noexcept { return violations.empty(); }
};

/// Every frame must decode to a known tag with exactly its declared payload, which carries at
/// most an index, an estimate, a precision, a norm-type scalar or a short error text.
inline TranscriptReport analyze_transcript(const std::vector<std::string> &frames) {
    TranscriptReport rep;
    for (const auto &f : frames) {
        ++rep.frames;
        try {
            const Message m = decode(f);
            ++rep.by_tag[m.tag];
            if (f.size() > 4 + kHeaderBytes + 4 + 2 + kMaxErrorText)
                rep.violations.push_back("frame " + std::to_string(rep.frames) + " exceeds the largest message");
        } catch (const Error &e) {
            rep.violations.push_back("frame " + std::to_string(rep.frames) + ": " + e.what());
        }
    }
    return rep;
}

}  // namespace asq::wire
