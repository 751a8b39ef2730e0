// asq_party: one party of the distributed overlap protocol. Holds a state privately and
// answers sample, query and norm requests over TCP until killed.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <memory>
#include <string>

#include "asq/io.hpp"
#include "asq/party.hpp"
#include "asq/transport.hpp"

namespace {

asq::wire::TcpService *g_service = nullptr;

extern "C" void on_signal(int) {
    // shutdown() on the listener is async-signal-safe and ends the accept loop.
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Party server for the distributed overlap protocol"};
    std::string role_text, listen, state_path;
    std::uint64_t seed = 0;
    app.add_option("--role", role_text, "alice or bob")->required()->check(CLI::IsMember({"alice", "bob"}));
    app.add_option("--listen", listen, "host:port to listen on")->required();
    app.add_option("--state", state_path, "state vector JSON")->required();
    app.add_option("--seed", seed, "root seed of the per-session streams")->required();
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return 1;
    }

    std::unique_ptr<asq::wire::TcpService> service;
    std::unique_ptr<asq::party::PartyServer> server;
    try {
        const auto role = asq::party::parse_role(role_text);
        const auto state = asq::io::load_vector(state_path);
        server = std::make_unique<asq::party::PartyServer>(asq::party::make_party(role, state, seed));
        const auto [host, port] = asq::wire::split_host_port(listen);
        service = std::make_unique<asq::wire::TcpService>(host, port, server->handler());
        std::cerr << role_text << " listening on " << host << ":" << service->port() << std::endl;
    } catch (const asq::Error &e) {
        std::cerr << asq::error_code_name(e.code()) << ": " << e.what() << "\n";
        return 1;
    }
    g_service = service.get();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service->run();
    return 0;
}
