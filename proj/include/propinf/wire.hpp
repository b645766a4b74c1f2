#pragma once

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "propinf/attack.hpp"
#include "propinf/common.hpp"
#include "propinf/gcn.hpp"
#include "propinf/model.hpp"

namespace propinf {

// ---------------------------------------------------------------------------
// Wire protocol: UTF-8 lines terminated by '\n'. Request:
//   {"id":1,"features":[0.0,1.0,0.5]}   or   {"id":1,"node_ids":[3,7]}
// Response:
//   {"id":1,"posterior":[0.2,0.8]}      or   {"id":1,"error":"width mismatch"}
// Numbers are serialized with 17 significant digits. Responses are strictly
// ordered per connection; a malformed request yields an error response and
// the connection stays open.
// ---------------------------------------------------------------------------

namespace wire {

inline std::string posterior_response(std::uint64_t id, const double* row, std::size_t l) {
    std::string out = "{\"id\":" + std::to_string(id) + ",\"posterior\":[";
    for (std::size_t j = 0; j < l; ++j) {
        if (j) out += ",";
        out += format_double(row[j]);
    }
    out += "]}\n";
    return out;
}

inline std::string error_response(std::uint64_t id, const std::string& message) {
    nlohmann::json j;
    j["id"] = id;
    j["error"] = message;
    return j.dump() + "\n";
}

}  // namespace wire

// ---------------------------------------------------------------------------
// Server: serves a trained tabular model, or a GCN together with its graph.
// The model is immutable shared state; each connection gets its own thread.
// ---------------------------------------------------------------------------

class InferenceServer {
public:
    // Tabular model.
    InferenceServer(TrainedModel model, const std::string& host, int port)
        : model_(std::move(model)) {
        bind_and_listen(host, port);
    }

    // Graph model: queries carry node ids.
    InferenceServer(TrainedModel model, GraphDataset graph, const std::string& host, int port)
        : model_(std::move(model)), graph_(std::move(graph)), has_graph_(true) {
        if (model_.arch != Arch::Gcn) throw Error("server: graph serving requires a GCN model");
        adj_ = normalized_adjacency(graph_);
        bind_and_listen(host, port);
    }

    ~InferenceServer() { stop(); }

    InferenceServer(const InferenceServer&) = delete;
    InferenceServer& operator=(const InferenceServer&) = delete;

    int port() const { return port_; }

    void stop() {
        bool expected = false;
        if (!stopping_.compare_exchange_strong(expected, true)) return;
        if (listen_fd_ >= 0) {
            ::shutdown(listen_fd_, SHUT_RDWR);
            ::close(listen_fd_);
            listen_fd_ = -1;
        }
        if (accept_thread_.joinable()) accept_thread_.join();
        std::lock_guard<std::mutex> lock(workers_mutex_);
        for (auto& t : workers_)
            if (t.joinable()) t.join();
        workers_.clear();
    }

private:
    void bind_and_listen(const std::string& host, int port) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw Error("server: socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port));
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            throw Error("server: bad host " + host);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw Error("server: cannot bind " + host + ":" + std::to_string(port));
        }
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        if (::listen(listen_fd_, 16) != 0) {
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw Error("server: listen() failed");
        }
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    void accept_loop() {
        while (!stopping_.load()) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (stopping_.load()) break;
                continue;
            }
            std::lock_guard<std::mutex> lock(workers_mutex_);
            workers_.emplace_back([this, fd] { handle_connection(fd); });
        }
    }

    static bool send_all(int fd, const std::string& data) {
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n <= 0) return false;
            off += static_cast<std::size_t>(n);
        }
        return true;
    }

    void handle_connection(int fd) {
        std::string buffer;
        char chunk[4096];
        while (!stopping_.load()) {
            ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n <= 0) break;
            buffer.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            bool ok = true;
            while ((pos = buffer.find('\n')) != std::string::npos) {
                std::string line = buffer.substr(0, pos);
                buffer.erase(0, pos + 1);
                if (!send_all(fd, handle_request(line))) {
                    ok = false;
                    break;
                }
            }
            if (!ok) break;
        }
        ::close(fd);
    }

    std::string handle_request(const std::string& line) {
        std::uint64_t id = 0;
        try {
            nlohmann::json req = nlohmann::json::parse(line);
            if (!req.contains("id") || !req["id"].is_number_integer())
                return wire::error_response(0, "missing id");
            id = req["id"].get<std::uint64_t>();
            if (has_graph_) {
                if (!req.contains("node_ids")) return wire::error_response(id, "missing node_ids");
                std::vector<std::size_t> ids = req["node_ids"].get<std::vector<std::size_t>>();
                if (ids.size() != 1) return wire::error_response(id, "one node id per request");
                if (ids[0] >= graph_.n_nodes) return wire::error_response(id, "node id out of range");
                ensure_graph_posteriors();
                return wire::posterior_response(id, graph_posteriors_.row(ids[0]),
                                                graph_posteriors_.cols);
            }
            if (!req.contains("features")) return wire::error_response(id, "missing features");
            std::vector<double> feats = req["features"].get<std::vector<double>>();
            if (feats.size() != model_.input_width) return wire::error_response(id, "width mismatch");
            Matrix x(1, feats.size());
            std::copy(feats.begin(), feats.end(), x.row(0));
            Matrix post = predict_proba(model_, x);
            return wire::posterior_response(id, post.row(0), post.cols);
        } catch (const std::exception& e) {
            return wire::error_response(id, std::string("malformed request: ") + e.what());
        }
    }

    void ensure_graph_posteriors() {
        std::call_once(graph_once_, [this] {
            graph_posteriors_ = gcn_forward(model_, adj_, graph_.node_features);
        });
    }

    TrainedModel model_;
    GraphDataset graph_;
    bool has_graph_ = false;
    NormalizedAdjacency adj_;
    Matrix graph_posteriors_;
    std::once_flag graph_once_;

    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::mutex workers_mutex_;
    std::vector<std::thread> workers_;
};

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

class RemoteModel {
public:
    RemoteModel(const std::string& host, int port, int timeout_ms = 10000)
        : host_(host), port_(port), timeout_ms_(timeout_ms) {}

    // Same contract as local predict_proba: one posterior row per input row.
    // All-or-nothing: any failure raises and yields no partial results.
    Matrix query(const Matrix& features) const {
        std::vector<std::string> requests;
        requests.reserve(features.rows);
        for (std::size_t i = 0; i < features.rows; ++i) {
            std::string line = "{\"id\":" + std::to_string(i) + ",\"features\":[";
            for (std::size_t j = 0; j < features.cols; ++j) {
                if (j) line += ",";
                line += format_double(features(i, j));
            }
            line += "]}\n";
            requests.push_back(std::move(line));
        }
        return run_batch(requests, features.rows);
    }

    Matrix query_nodes(const std::vector<std::size_t>& node_ids) const {
        std::vector<std::string> requests;
        requests.reserve(node_ids.size());
        for (std::size_t i = 0; i < node_ids.size(); ++i)
            requests.push_back("{\"id\":" + std::to_string(i) + ",\"node_ids\":[" +
                               std::to_string(node_ids[i]) + "]}\n");
        return run_batch(requests, node_ids.size());
    }

    QueryFn as_query_fn() const {
        return [*this](const Matrix& x) { return query(x); };
    }

private:
    Matrix run_batch(const std::vector<std::string>& requests, std::size_t n) const {
        if (n == 0) return Matrix(0, 0);
        int fd = connect_to_server();
        try {
            for (const auto& r : requests)
                if (!send_all(fd, r)) throw Error("remote: send failed");
            Matrix out;
            std::string buffer;
            std::size_t received = 0;
            while (received < n) {
                std::string line = read_line(fd, buffer);
                nlohmann::json resp = nlohmann::json::parse(line);
                std::uint64_t id = resp.at("id").get<std::uint64_t>();
                if (id != received)
                    throw Error("remote: response id " + std::to_string(id) + " out of order");
                if (resp.contains("error"))
                    throw Error("remote: server error at query " + std::to_string(id) + ": " +
                                resp["error"].get<std::string>());
                std::vector<double> post = resp.at("posterior").get<std::vector<double>>();
                if (out.cols == 0) out = Matrix(n, post.size());
                if (post.size() != out.cols) throw Error("remote: inconsistent posterior width");
                std::copy(post.begin(), post.end(), out.row(received));
                ++received;
            }
            ::close(fd);
            return out;
        } catch (...) {
            ::close(fd);
            throw;
        }
    }

    int connect_to_server() const {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw Error("remote: socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<std::uint16_t>(port_));
        if (::inet_pton(AF_INET, host_.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw Error("remote: bad host " + host_);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw Error("remote: cannot connect to " + host_ + ":" + std::to_string(port_));
        }
        return fd;
    }

    static bool send_all(int fd, const std::string& data) {
        std::size_t off = 0;
        while (off < data.size()) {
            ssize_t n = ::send(fd, data.data() + off, data.size() - off, MSG_NOSIGNAL);
            if (n <= 0) return false;
            off += static_cast<std::size_t>(n);
        }
        return true;
    }

    std::string read_line(int fd, std::string& buffer) const {
        std::size_t pos;
        while ((pos = buffer.find('\n')) == std::string::npos) {
            pollfd pfd{fd, POLLIN, 0};
            int rc = ::poll(&pfd, 1, timeout_ms_);
            if (rc == 0) throw Error("remote: timeout waiting for response");
            if (rc < 0) throw Error("remote: poll failed");
            char chunk[4096];
            ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
            if (n <= 0) throw Error("remote: connection closed");
            buffer.append(chunk, static_cast<std::size_t>(n));
        }
        std::string line = buffer.substr(0, pos);
        buffer.erase(0, pos + 1);
        return line;
    }

    std::string host_;
    int port_;
    int timeout_ms_;
};

}  // namespace propinf
