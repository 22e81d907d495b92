/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SEETHROUGH_LIVE_SERVER_HPP_
#define SEETHROUGH_LIVE_SERVER_HPP_

#include <array>
#include <chrono>
#include <deque>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "seethrough/error.hpp"
#include "seethrough/live/live_session.hpp"
#include "seethrough/session/message.hpp"

namespace seethrough::live {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

/// Parses "host:port"; the host may be empty (all interfaces) or bracketed IPv6.
inline tcp::endpoint parse_endpoint(const std::string& text) {
    const auto colon = text.rfind(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("expected host:port, got '" + text + "'");
    }
    std::string host = text.substr(0, colon);
    const std::string port = text.substr(colon + 1);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') {
        host = host.substr(1, host.size() - 2);
    }
    if (host.empty() || host == "*") {
        host = "0.0.0.0";
    } else if (host == "localhost") {
        host = "127.0.0.1";
    }
    boost::system::error_code ec;
    const auto addr = net::ip::make_address(host, ec);
    unsigned long p = 0;
    try {
        std::size_t used = 0;
        p = std::stoul(port, &used);
        if (used != port.size() || p > 65535) {
            throw std::invalid_argument(port);
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("bad port in '" + text + "'");
    }
    if (ec) {
        throw std::invalid_argument("bad address in '" + text + "'");
    }
    return {addr, static_cast<unsigned short>(p)};
}

/// Serves one LiveSession to consoles over WebSocket (one NDJSON line per
/// text frame) and, optionally, to plain TCP clients speaking raw NDJSON.
/// Everything runs on the caller's io_context; run it on one thread.
class Server {
public:
    Server(net::io_context& io, LiveSession& session, Micros tick = Micros{20'000})
        : io_(io), session_(session), tick_(tick), timer_(io), start_(std::chrono::steady_clock::now()) {}

    /// Session time: microseconds since the server was constructed.
    Micros now() const {
        return std::chrono::duration_cast<Micros>(std::chrono::steady_clock::now() - start_);
    }

    /// Binds a WebSocket listener; throws boost::system::system_error on failure.
    tcp::endpoint listen_websocket(const tcp::endpoint& at) { return listen(at, true); }

    /// Binds a raw NDJSON-over-TCP listener.
    tcp::endpoint listen_tcp(const tcp::endpoint& at) { return listen(at, false); }

    void start() {
        schedule_tick();
    }

    /// Stops accepting and ticking. Open connections live until the
    /// io_context is stopped.
    void stop() {
        stopped_ = true;
        timer_.cancel();
        for (auto& a : acceptors_) {
            boost::system::error_code ec;
            a->close(ec);
        }
    }

    bool stopped() const noexcept { return stopped_; }

private:
    class WsConnection : public std::enable_shared_from_this<WsConnection> {
    public:
        WsConnection(tcp::socket socket, Server& server) : ws_(std::move(socket)), server_(server) {}

        void start() {
            ws_.text(true);
            ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
                if (!ec) {
                    self->opened();
                }
            });
        }

    private:
        void opened() {
            std::weak_ptr<WsConnection> weak = shared_from_this();
            auto executor = ws_.get_executor();
            id_ = server_.session_.connect([weak, executor](const std::string& line) {
                net::post(executor, [weak, line] {
                    if (auto self = weak.lock()) {
                        self->enqueue(line);
                    }
                });
            });
            read();
        }

        void read() {
            ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->closed();
                    return;
                }
                self->lines_.append(beast::buffers_to_string(self->buffer_.data()));
                self->buffer_.consume(self->buffer_.size());
                // A frame without a trailing newline is still one message.
                self->lines_.append("\n");
                try {
                    while (auto line = self->lines_.next_line()) {
                        if (!line->empty()) {
                            self->server_.session_.on_line(self->id_, *line, self->server_.now());
                        }
                    }
                } catch (const Error&) {
                    self->closed();
                    return;
                }
                self->read();
            });
        }

        void enqueue(const std::string& line) {
            if (closed_) {
                return;
            }
            outbox_.push_back(line);
            if (outbox_.size() == 1) {
                write();
            }
        }

        void write() {
            ws_.async_write(net::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
                if (ec) {
                    self->closed();
                    return;
                }
                self->outbox_.pop_front();
                if (!self->outbox_.empty()) {
                    self->write();
                }
            });
        }

        void closed() {
            if (!closed_) {
                closed_ = true;
                server_.session_.disconnect(id_, server_.now());
            }
        }

        websocket::stream<beast::tcp_stream> ws_;
        Server& server_;
        beast::flat_buffer buffer_;
        session::LineBuffer lines_;
        std::deque<std::string> outbox_;
        ConnectionId id_ = 0;
        bool closed_ = false;
    };

    class TcpConnection : public std::enable_shared_from_this<TcpConnection> {
    public:
        TcpConnection(tcp::socket socket, Server& server) : socket_(std::move(socket)), server_(server) {}

        void start() {
            std::weak_ptr<TcpConnection> weak = shared_from_this();
            auto executor = socket_.get_executor();
            id_ = server_.session_.connect([weak, executor](const std::string& line) {
                net::post(executor, [weak, line] {
                    if (auto self = weak.lock()) {
                        self->enqueue(line);
                    }
                });
            });
            read();
        }

    private:
        void read() {
            socket_.async_read_some(net::buffer(chunk_), [self = shared_from_this()](beast::error_code ec, std::size_t n) {
                if (ec) {
                    self->closed();
                    return;
                }
                try {
                    self->lines_.append(std::string_view(self->chunk_.data(), n));
                    while (auto line = self->lines_.next_line()) {
                        if (!line->empty()) {
                            self->server_.session_.on_line(self->id_, *line, self->server_.now());
                        }
                    }
                } catch (const Error&) {
                    self->closed();
                    return;
                }
                self->read();
            });
        }

        void enqueue(const std::string& line) {
            if (closed_) {
                return;
            }
            outbox_.push_back(line);
            if (outbox_.size() == 1) {
                write();
            }
        }

        void write() {
            net::async_write(socket_, net::buffer(outbox_.front()),
                             [self = shared_from_this()](beast::error_code ec, std::size_t) {
                                 if (ec) {
                                     self->closed();
                                     return;
                                 }
                                 self->outbox_.pop_front();
                                 if (!self->outbox_.empty()) {
                                     self->write();
                                 }
                             });
        }

        void closed() {
            if (!closed_) {
                closed_ = true;
                boost::system::error_code ignored;
                socket_.close(ignored);
                server_.session_.disconnect(id_, server_.now());
            }
        }

        tcp::socket socket_;
        Server& server_;
        std::array<char, 4096> chunk_{};
        session::LineBuffer lines_;
        std::deque<std::string> outbox_;
        ConnectionId id_ = 0;
        bool closed_ = false;
    };

    tcp::endpoint listen(const tcp::endpoint& at, bool websocket) {
        auto acceptor = std::make_shared<tcp::acceptor>(io_);
        acceptor->open(at.protocol());
        acceptor->set_option(net::socket_base::reuse_address(true));
        acceptor->bind(at);
        acceptor->listen();
        acceptors_.push_back(acceptor);
        accept(acceptor, websocket);
        return acceptor->local_endpoint();
    }

    void accept(std::shared_ptr<tcp::acceptor> acceptor, bool websocket) {
        acceptor->async_accept([this, acceptor, websocket](beast::error_code ec, tcp::socket socket) {
            if (ec || stopped_) {
                return;
            }
            if (websocket) {
                std::make_shared<WsConnection>(std::move(socket), *this)->start();
            } else {
                std::make_shared<TcpConnection>(std::move(socket), *this)->start();
            }
            accept(acceptor, websocket);
        });
    }

    void schedule_tick() {
        timer_.expires_after(std::chrono::microseconds(tick_.count()));
        timer_.async_wait([this](beast::error_code ec) {
            if (ec || stopped_) {
                return;
            }
            session_.tick(now());
            schedule_tick();
        });
    }

    net::io_context& io_;
    LiveSession& session_;
    Micros tick_;
    net::steady_timer timer_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::shared_ptr<tcp::acceptor>> acceptors_;
    bool stopped_ = false;
};

}  // namespace seethrough::live

#endif  // SEETHROUGH_LIVE_SERVER_HPP_
