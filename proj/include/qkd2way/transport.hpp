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

// Links carry framed messages between the two parties. Every link records
// what its owner sends, so a live session yields a transcript, and a replay
// link checks a party's sends against one.

#pragma once

#include <cerrno>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include <sys/socket.h>
#include <unistd.h>

#include "qkd2way/message.hpp"

namespace qkd2way {

class Link {
  public:
    virtual ~Link() = default;
    virtual void send(const Message& m) = 0;
    /// Blocks for the next message; throws TransportError once the peer is gone.
    virtual Message recv() = 0;
    /// Wakes a peer blocked in recv. Idempotent.
    virtual void close() noexcept = 0;
};

/// Shared, append-only transcript. Sends in a half-duplex exchange are
/// causally ordered, so recording at send time gives a deterministic order.
class TranscriptRecorder {
  public:
    void record(Direction d, const Message& m) {
        std::lock_guard lock(mu_);
        transcript_.entries.push_back({d, m});
    }
    SessionTranscript take() {
        std::lock_guard lock(mu_);
        return std::move(transcript_);
    }

  private:
    std::mutex mu_;
    SessionTranscript transcript_;
};

namespace detail {

class MessageQueue {
  public:
    void push(Message m) {
        {
            std::lock_guard lock(mu_);
            if (closed_) {
                throw TransportError("send on closed link");
            }
            queue_.push_back(std::move(m));
        }
        cv_.notify_one();
    }
    Message pop() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
        if (queue_.empty()) {
            throw TransportError("peer closed the link");
        }
        Message m = std::move(queue_.front());
        queue_.pop_front();
        return m;
    }
    void close() noexcept {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Message> queue_;
    bool closed_ = false;
};

}  // namespace detail

class InProcessLink final : public Link {
  public:
    InProcessLink(std::shared_ptr<detail::MessageQueue> in, std::shared_ptr<detail::MessageQueue> out,
                  TranscriptRecorder* recorder, Direction outgoing)
        : in_(std::move(in)), out_(std::move(out)), recorder_(recorder), outgoing_(outgoing) {}

    void send(const Message& m) override {
        if (recorder_ != nullptr) {
            recorder_->record(outgoing_, m);
        }
        out_->push(m);
    }
    Message recv() override { return in_->pop(); }
    void close() noexcept override {
        in_->close();
        out_->close();
    }

  private:
    std::shared_ptr<detail::MessageQueue> in_;
    std::shared_ptr<detail::MessageQueue> out_;
    TranscriptRecorder* recorder_;
    Direction outgoing_;
};

/// Alice's and Bob's ends of an in-memory link.
inline std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>> make_in_process_links(TranscriptRecorder* recorder) {
    auto a2b = std::make_shared<detail::MessageQueue>();
    auto b2a = std::make_shared<detail::MessageQueue>();
    return {std::make_unique<InProcessLink>(b2a, a2b, recorder, Direction::alice_to_bob),
            std::make_unique<InProcessLink>(a2b, b2a, recorder, Direction::bob_to_alice)};
}

/// Framed messages over a reliable byte stream given as a file descriptor.
/// The link owns the descriptor.
class StreamLink final : public Link {
  public:
    StreamLink(int fd, TranscriptRecorder* recorder, Direction outgoing)
        : fd_(fd), recorder_(recorder), outgoing_(outgoing) {}
    ~StreamLink() override {
        close();
        ::close(fd_);
    }
    StreamLink(const StreamLink&) = delete;
    StreamLink& operator=(const StreamLink&) = delete;

    void send(const Message& m) override {
        if (recorder_ != nullptr) {
            recorder_->record(outgoing_, m);
        }
        const auto bytes = encode_frame(m);
        std::size_t done = 0;
        while (done < bytes.size()) {
            const ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                throw TransportError("stream write failed");
            }
            done += static_cast<std::size_t>(n);
        }
    }

    Message recv() override {
        std::array<std::uint8_t, kFrameHeaderBytes> header;
        read_exact(header.data(), header.size());
        const std::uint32_t n = frame_payload_length(header);
        std::vector<std::uint8_t> frame(header.begin(), header.end());
        frame.resize(kFrameHeaderBytes + std::size_t{n} + kMacBytes);
        read_exact(frame.data() + kFrameHeaderBytes, frame.size() - kFrameHeaderBytes);
        std::size_t pos = 0;
        return decode_frame(frame, pos);
    }

    void close() noexcept override {
        if (!shut_) {
            shut_ = true;
            ::shutdown(fd_, SHUT_RDWR);
        }
    }

  private:
    void read_exact(std::uint8_t* dst, std::size_t count) {
        std::size_t done = 0;
        while (done < count) {
            const ssize_t n = ::recv(fd_, dst + done, count - done, 0);
            if (n < 0 && errno == EINTR) {
                continue;
            }
            if (n <= 0) {
                throw TransportError(n == 0 ? "stream closed by peer" : "stream read failed");
            }
            done += static_cast<std::size_t>(n);
        }
    }

    int fd_;
    TranscriptRecorder* recorder_;
    Direction outgoing_;
    bool shut_ = false;
};

/// Alice's and Bob's ends of a connected socket pair.
inline std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>> make_stream_links(TranscriptRecorder* recorder) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
        throw TransportError("socketpair failed");
    }
    return {std::make_unique<StreamLink>(fds[0], recorder, Direction::alice_to_bob),
            std::make_unique<StreamLink>(fds[1], recorder, Direction::bob_to_alice)};
}

/// Plays one party's peer from a recorded transcript. Incoming messages are
/// served from the record; every outgoing message must match it byte for byte.
class ReplayLink final : public Link {
  public:
    ReplayLink(const SessionTranscript& transcript, Direction outgoing)
        : transcript_(transcript), outgoing_(outgoing) {}

    void send(const Message& m) override {
        const auto& e = next("send " + std::string(to_string(m.kind)));
        if (e.direction != outgoing_) {
            throw ValidationError(where() + ": party sent " + std::string(to_string(m.kind)) +
                                  " where the transcript has an incoming " +
                                  std::string(to_string(e.message.kind)));
        }
        if (!(e.message == m)) {
            throw ValidationError(where() + ": " + std::string(to_string(m.kind)) + " diverges from the transcript" +
                                  (e.message.kind != m.kind ? " (recorded " + std::string(to_string(e.message.kind)) + ")"
                                                            : ""));
        }
        ++cursor_;
    }

    Message recv() override {
        const auto& e = next("receive");
        if (e.direction == outgoing_) {
            throw ValidationError(where() + ": party waits for a message but the transcript has its own " +
                                  std::string(to_string(e.message.kind)));
        }
        ++cursor_;
        return e.message;
    }

    void close() noexcept override {}

    /// Throws unless every entry was consumed.
    void finish() const {
        if (cursor_ != transcript_.entries.size()) {
            throw ValidationError("transcript has " + std::to_string(transcript_.entries.size() - cursor_) +
                                  " unconsumed entries");
        }
    }

  private:
    const TranscriptEntry& next(const std::string& what) const {
        if (cursor_ >= transcript_.entries.size()) {
            throw ValidationError("transcript truncated: cannot " + what + " at entry " + std::to_string(cursor_));
        }
        return transcript_.entries[cursor_];
    }
    std::string where() const { return "entry " + std::to_string(cursor_); }

    const SessionTranscript& transcript_;
    Direction outgoing_;
    std::size_t cursor_ = 0;
};

}  // namespace qkd2way
