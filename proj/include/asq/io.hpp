#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "asq/access.hpp"
#include "asq/backends.hpp"
#include "asq/errors.hpp"
#include "asq/numeric.hpp"
#include "asq/pauli.hpp"

namespace asq::io {

using nlohmann::json;

namespace detail {

inline std::vector<cplx> parse_entries(const json &entries) {
    if (!entries.is_array()) throw Error(ErrorCode::InvalidArgument, "\"entries\" must be an array");
    std::vector<cplx> out;
    out.reserve(entries.size());
    for (const auto &e : entries) {
        if (e.is_number()) {
            out.emplace_back(e.get<double>(), 0.0);
        } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
            out.emplace_back(e[0].get<double>(), e[1].get<double>());
        } else {
            throw Error(ErrorCode::InvalidArgument, "entry must be [re, im]");
        }
    }
    return out;
}

inline json dump_entries(std::span<const cplx> v) {
    json a = json::array();
    for (const auto &c : v) a.push_back({c.real(), c.imag()});
    return a;
}

inline std::string read_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string &path, const std::string &bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
    out << bytes;
    if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

inline json parse(const std::string &text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON: ") + e.what());
    }
}

}  // namespace detail

/// {"dim": d, "entries": [[re, im], ...]}
inline DenseVector vector_from_json(const json &j) {
    if (!j.contains("dim") || !j.contains("entries")) throw Error(ErrorCode::InvalidArgument, "vector needs dim and entries");
    const auto d = j.at("dim").get<std::size_t>();
    auto entries = detail::parse_entries(j.at("entries"));
    if (entries.size() != d) throw Error(ErrorCode::DimensionMismatch, "entry count differs from dim");
    return DenseVector(std::move(entries));
}

inline json vector_to_json(const DenseVector &v) { return {{"dim", v.dim()}, {"entries", detail::dump_entries(v.entries())}}; }

inline DenseVector load_vector(const std::string &path) { return vector_from_json(detail::parse(detail::read_file(path))); }

inline void save_vector(const std::string &path, const DenseVector &v) {
    detail::write_file(path, vector_to_json(v).dump(1) + "\n");
}

struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<cplx> entries;  // row-major
};

/// {"rows": r, "cols": c, "entries": row-major [[re, im], ...]}
inline Matrix matrix_from_json(const json &j) {
    if (!j.contains("rows") || !j.contains("cols") || !j.contains("entries"))
        throw Error(ErrorCode::InvalidArgument, "matrix needs rows, cols and entries");
    Matrix m{j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(), detail::parse_entries(j.at("entries"))};
    if (m.entries.size() != m.rows * m.cols) throw Error(ErrorCode::DimensionMismatch, "entry count differs from rows x cols");
    return m;
}

inline json matrix_to_json(const Matrix &m) {
    return {{"rows", m.rows}, {"cols", m.cols}, {"entries", detail::dump_entries(m.entries)}};
}

inline Matrix load_matrix(const std::string &path) { return matrix_from_json(detail::parse(detail::read_file(path))); }

inline void save_matrix(const std::string &path, const Matrix &m) {
    detail::write_file(path, matrix_to_json(m).dump(1) + "\n");
}

inline json ledger_to_json(const LedgerSnapshot &s) {
    json q = json::array(), n = json::array();
    for (const auto &[eps, count] : s.query_calls) q.push_back({{"eps", eps}, {"count", count}});
    for (const auto &[eps, count] : s.norm_calls) n.push_back({{"eps", eps}, {"count", count}});
    return {{"samples", s.sample_calls}, {"sample_failures", s.sample_failures}, {"queries", q}, {"norms", n}};
}

inline json report_to_json(const EstimatorReport &r) {
    return {{"estimate_re", r.estimate.real()},
            {"estimate_im", r.estimate.imag()},
            {"error_bound", r.error_bound},
            {"success_prob", r.success_prob},
            {"ledger", ledger_to_json(r.ledger)}};
}

inline EstimatorReport report_from_json(const json &j) {
    EstimatorReport r;
    r.estimate = {j.at("estimate_re").get<double>(), j.at("estimate_im").get<double>()};
    r.error_bound = j.at("error_bound").get<double>();
    r.success_prob = j.at("success_prob").get<double>();
    const auto &l = j.at("ledger");
    r.ledger.sample_calls = l.at("samples").get<std::uint64_t>();
    r.ledger.sample_failures = l.at("sample_failures").get<std::uint64_t>();
    for (const auto &e : l.at("queries")) r.ledger.query_calls[e.at("eps").get<double>()] = e.at("count").get<std::uint64_t>();
    for (const auto &e : l.at("norms")) r.ledger.norm_calls[e.at("eps").get<double>()] = e.at("count").get<std::uint64_t>();
    return r;
}

namespace detail {

inline void put_u32(std::string &out, std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}
inline void put_u64(std::string &out, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFU));
}
inline std::uint32_t get_u32(const unsigned char *p) {
    std::uint32_t v = 0;
    for (int b = 3; b >= 0; --b) v = (v << 8) | p[b];
    return v;
}
inline std::uint64_t get_u64(const unsigned char *p) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
    return v;
}

}  // namespace detail

/// "ASQP", u32 n, then 4^n f64 in tableau index order, all little-endian.
inline std::string encode_pauli(const PauliRepresentation &rep) {
    if (rep.values.size() != (std::size_t{1} << (2 * rep.n)))
        throw Error(ErrorCode::DimensionMismatch, "value count is not 4^n");
    std::string out = "ASQP";
    detail::put_u32(out, rep.n);
    for (double v : rep.values) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    return out;
}

inline PauliRepresentation decode_pauli(const std::string &bytes) {
    const auto *p = reinterpret_cast<const unsigned char *>(bytes.data());
    if (bytes.size() < 8 || std::memcmp(p, "ASQP", 4) != 0) throw Error(ErrorCode::InvalidArgument, "missing ASQP header");
    PauliRepresentation rep;
    rep.n = detail::get_u32(p + 4);
    if (rep.n > kMaxPauliQubits) throw Error(ErrorCode::InvalidArgument, "qubit count too large");
    const std::size_t count = std::size_t{1} << (2 * rep.n);
    if (bytes.size() != 8 + 8 * count) throw Error(ErrorCode::InvalidArgument, "ASQP payload length mismatch");
    rep.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) rep.values[i] = std::bit_cast<double>(detail::get_u64(p + 8 + 8 * i));
    return rep;
}

inline void save_pauli(const std::string &path, const PauliRepresentation &rep) { detail::write_file(path, encode_pauli(rep)); }
inline PauliRepresentation load_pauli(const std::string &path) { return decode_pauli(detail::read_file(path)); }

}  // namespace asq::io
