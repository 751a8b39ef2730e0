#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "asq/access.hpp"
#include "asq/errors.hpp"
#include "asq/estimators.hpp"
#include "asq/pauli.hpp"
#include "asq/protocol.hpp"
#include "asq/transport.hpp"

namespace asq::party {

enum class Role { Alice, Bob };

inline Role parse_role(const std::string &s) {
    if (s == "alice") return Role::Alice;
    if (s == "bob") return Role::Bob;
    throw Error(ErrorCode::InvalidArgument, "role must be alice or bob, got " + s);
}

/// One party's private state and the Pauli sampler built from it. Nothing here is sent
/// anywhere except through PartyServer's request handlers.
struct PartyEndpoint {
    Role role = Role::Alice;
    std::shared_ptr<const PauliSamplerHandle> sampler;
    std::uint64_t seed = 0;

    double one_norm() const { return sampler->one_norm(); }
};

inline PartyEndpoint make_party(Role role, const DenseVector &state, std::uint64_t seed, CorollaryCost cost = {}) {
    return {role, std::make_shared<PauliSamplerHandle>(pauli_representation(state), cost), seed};
}

/// Stateless per request; each session draws from its own stream derive_seed(seed, session).
class PartyServer {
public:
    PartyServer(std::shared_ptr<const AccessHandle> handle, std::uint64_t seed, double one_norm)
        : handle_(std::move(handle)), seed_(seed), one_norm_(one_norm) {}

    explicit PartyServer(const PartyEndpoint &p) : PartyServer(p.sampler, p.seed, p.one_norm()) {}

    /// Answers one frame. Malformed frames and handle errors produce an ERROR reply and
    /// leave the session usable.
    void handle_frame(const std::string &frame, std::string &out) {
        wire::Message req;
        try {
            req = wire::decode(frame);
        } catch (const Error &e) {
            out += wire::encode(wire::error_msg(session_of(frame), e.code(), e.what()));
            return;
        }
        try {
            respond(req, out);
        } catch (const Error &e) {
            out += wire::encode(wire::error_msg(req.session, e.code(), e.what()));
        }
    }

    wire::FrameHandler handler() {
        return [this](const std::string &frame, std::string &out) { handle_frame(frame, out); };
    }

    std::size_t open_sessions() const {
        std::lock_guard lock(mu_);
        return sessions_.size();
    }

private:
    static std::uint64_t session_of(const std::string &frame) {
        if (frame.size() < 4 + wire::kHeaderBytes) return 0;
        std::uint64_t s = 0;
        for (int b = 7; b >= 0; --b) s = (s << 8) | static_cast<unsigned char>(frame[5 + b]);
        return s;
    }

    Rng &stream(std::uint64_t session) {
        auto it = sessions_.find(session);
        if (it == sessions_.end()) it = sessions_.emplace(session, make_rng(seed_, session)).first;
        return it->second;
    }

    void respond(const wire::Message &req, std::string &out) {
        std::lock_guard lock(mu_);
        using wire::Tag;
        switch (req.tag) {
            case Tag::SampleReq: {
                const SampleOutcome o = handle_->sample(stream(req.session));
                out += wire::encode(wire::sample_resp(req.session, o.ok(), o.ok() ? o.index() : 0));
                return;
            }
            case Tag::QueryReq: {
                if (req.index >= handle_->dim()) throw Error(ErrorCode::IndexOutOfRange, "index " + std::to_string(req.index));
                if (!(req.eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
                const QueryResult q = handle_->query(req.index, req.eps, stream(req.session));
                out += wire::encode(wire::query_resp(req.session, q.value));
                return;
            }
            case Tag::NormReq: {
                if (!(req.eps > 0.0)) throw Error(ErrorCode::InvalidArgument, "eps must be positive");
                out += wire::encode(wire::norm_resp(req.session, handle_->norm_sq(req.eps, stream(req.session))));
                return;
            }
            case Tag::InfoReq:
                out += wire::encode(wire::info_resp(req.session, handle_->dim(), handle_->phi(), one_norm_));
                return;
            case Tag::Close: sessions_.erase(req.session); return;
            default: throw Error(ErrorCode::MalformedFrame, std::string(wire::tag_name(req.tag)) + " is not a request");
        }
    }

    std::shared_ptr<const AccessHandle> handle_;
    std::uint64_t seed_;
    double one_norm_;
    mutable std::mutex mu_;
    std::map<std::uint64_t, Rng> sessions_;
};

/// Coordinator-side handle whose every oracle call is one request frame. The caller's
/// generator is ignored: randomness lives with the serving party. Ledger entries are per message.
class RemoteHandle final : public AccessHandle {
public:
    RemoteHandle(std::shared_ptr<wire::Channel> channel, std::uint64_t session,
                 std::shared_ptr<CostLedger> ledger = nullptr)
        : AccessHandle(std::move(ledger)), ch_(std::move(channel)), session_(session) {
        std::lock_guard lock(mu_);
        send(wire::encode(wire::info_req(session_)));
        const auto info = expect(wire::Tag::InfoResp);
        dim_ = static_cast<std::size_t>(info.dim);
        phi_ = info.phi;
        one_norm_ = info.scalar;
    }

    ~RemoteHandle() override {
        try {
            close();
        } catch (...) {
        }
    }

    std::size_t dim() const override { return dim_; }
    double phi() const override { return phi_; }
    double one_norm() const noexcept { return one_norm_; }

    SampleOutcome sample(Rng &) const override {
        std::lock_guard lock(mu_);
        send(wire::encode(wire::sample_req(session_)));
        const auto r = expect(wire::Tag::SampleResp);
        ledger().record_sample(r.success);
        if (!r.success) return SampleOutcome::failed();
        if (r.index >= dim_) throw Error(ErrorCode::MalformedFrame, "sample index out of range");
        return SampleOutcome::at(static_cast<std::size_t>(r.index));
    }

    QueryResult query(std::size_t i, double eps, Rng &) const override {
        check_index(i);
        std::lock_guard lock(mu_);
        send(wire::encode(wire::query_req(session_, i, eps)));
        const auto r = expect(wire::Tag::QueryResp);
        ledger().record_query(eps);
        return {r.value, eps};
    }

    /// All requests leave in one write; replies are read back in order.
    void query_many(std::size_t i, double eps, std::span<cplx> out, Rng &) const override {
        check_index(i);
        std::lock_guard lock(mu_);
        const std::string one = wire::encode(wire::query_req(session_, i, eps));
        std::string batch;
        batch.reserve(one.size() * out.size());
        for (std::size_t k = 0; k < out.size(); ++k) batch += one;
        send(batch, out.size());
        for (auto &v : out) v = expect(wire::Tag::QueryResp).value;
        ledger().record_query(eps, out.size());
    }

    double norm_sq(double eps, Rng &) const override {
        std::lock_guard lock(mu_);
        send(wire::encode(wire::norm_req(session_, eps)));
        const auto r = expect(wire::Tag::NormResp);
        ledger().record_norm(eps);
        return r.scalar;
    }

    /// Ends the session on the server; later calls are errors.
    void close() {
        std::lock_guard lock(mu_);
        if (closed_) return;
        closed_ = true;
        ch_->send(wire::encode(wire::close_msg(session_)));
        ++messages_;
    }

    std::uint64_t messages_sent() const {
        std::lock_guard lock(mu_);
        return messages_;
    }

private:
    void send(const std::string &bytes, std::uint64_t frames = 1) const {
        if (closed_) throw Error(ErrorCode::SessionAbort, "session closed");
        ch_->send(bytes);
        messages_ += frames;
    }

    wire::Message expect(wire::Tag tag) const {
        const wire::Message m = wire::decode(ch_->recv());
        if (m.session != session_) throw Error(ErrorCode::MalformedFrame, "reply for another session");
        if (m.tag == wire::Tag::Error) {
            throw Error(m.code <= static_cast<std::uint32_t>(ErrorCode::Io) ? static_cast<ErrorCode>(m.code)
                                                                              : ErrorCode::SessionAbort,
                        "remote: " + m.text);
        }
        if (m.tag != tag)
            throw Error(ErrorCode::MalformedFrame,
                        "expected " + std::string(wire::tag_name(tag)) + ", got " + std::string(wire::tag_name(m.tag)));
        return m;
    }

    std::shared_ptr<wire::Channel> ch_;
    std::uint64_t session_;
    std::size_t dim_ = 0;
    double phi_ = 1.0;
    double one_norm_ = 0.0;
    mutable std::mutex mu_;
    mutable std::uint64_t messages_ = 0;
    bool closed_ = false;
};

/// In-process stand-in for a serving party: the same call sequence as RemoteHandle, answered
/// directly by the party's handle on the stream its server would use for `session`.
class PartyHandle final : public AccessHandle {
public:
    PartyHandle(std::shared_ptr<const AccessHandle> inner, std::uint64_t party_seed, std::uint64_t session)
        : AccessHandle(inner->ledger_ptr()), inner_(std::move(inner)), rng_(make_rng(party_seed, session)) {}

    std::size_t dim() const override { return inner_->dim(); }
    double phi() const override { return inner_->phi(); }

    SampleOutcome sample(Rng &) const override {
        std::lock_guard lock(mu_);
        return inner_->sample(rng_);
    }
    QueryResult query(std::size_t i, double eps, Rng &) const override {
        check_index(i);
        std::lock_guard lock(mu_);
        return inner_->query(i, eps, rng_);
    }
    double norm_sq(double eps, Rng &) const override {
        std::lock_guard lock(mu_);
        return inner_->norm_sq(eps, rng_);
    }

private:
    std::shared_ptr<const AccessHandle> inner_;
    mutable std::mutex mu_;
    mutable Rng rng_;
};

/// Ledger counts that messages stand for; cost units are a server-side quantity.
inline bool same_calls(const LedgerSnapshot &a, const LedgerSnapshot &b) {
    return a.sample_calls == b.sample_calls && a.sample_failures == b.sample_failures &&
           a.query_calls == b.query_calls && a.norm_calls == b.norm_calls;
}

struct OverlapRun {
    InnerProductResult result;
    double kappa = 0.0;
    LedgerSnapshot alice_calls;
    LedgerSnapshot bob_calls;
    std::uint64_t messages = 0;  // request frames sent by the coordinator, INFO and CLOSE included
};

inline InnerProductConfig overlap_config(double eps, double kappa) {
    InnerProductConfig cfg;
    cfg.eps = eps;
    cfg.kappa = kappa;
    return cfg;
}

/// Real-vector overlap estimate with both parties answered in process.
inline OverlapRun overlap_local(const PartyEndpoint &alice, const PartyEndpoint &bob, std::uint64_t session,
                                double eps, Rng &rng) {
    auto ha = std::make_shared<PartyHandle>(alice.sampler, alice.seed, session);
    auto hb = std::make_shared<PartyHandle>(bob.sampler, bob.seed, session);
    const auto a0 = ha->ledger().snapshot(), b0 = hb->ledger().snapshot();
    OverlapRun run;
    run.kappa = std::max(alice.one_norm(), bob.one_norm());
    run.result = inner_product_real_exact(ha, hb, overlap_config(eps, run.kappa), rng);
    run.alice_calls = ha->ledger().snapshot().since(a0);
    run.bob_calls = hb->ledger().snapshot().since(b0);
    return run;
}

/// The same estimate with every oracle call sent over the two channels. Each party reports
/// its own ||pi||_1 and the coordinator uses the larger one as kappa.
inline OverlapRun overlap_remote(std::shared_ptr<wire::Channel> alice, std::shared_ptr<wire::Channel> bob,
                                 std::uint64_t session, double eps, Rng &rng) {
    auto ha = std::make_shared<RemoteHandle>(std::move(alice), session);
    auto hb = std::make_shared<RemoteHandle>(std::move(bob), session);
    OverlapRun run;
    run.kappa = std::max(ha->one_norm(), hb->one_norm());
    run.result = inner_product_real_exact(ha, hb, overlap_config(eps, run.kappa), rng);
    ha->close();
    hb->close();
    run.alice_calls = ha->ledger().snapshot();
    run.bob_calls = hb->ledger().snapshot();
    run.messages = ha->messages_sent() + hb->messages_sent();
    return run;
}

}  // namespace asq::party
