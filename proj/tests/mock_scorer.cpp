// Scoring endpoint used by the external-scorer tests. Speaks the line protocol on
// stdin/stdout, or on one accepted TCP connection with --tcp PORT (0 picks a free
// port, which is printed on stdout before accepting).
//
// Modes:
//   echo        always 0
//   mean        mean sample value
//   model=PATH  forward pass of a saved checkpoint
//   error       answers every SCORE with an ERR line
//   garbage     answers with text that is not a number
//   nan         answers "nan"
//   hang        never answers SCORE
//   badhello    answers the handshake with "NOPE"

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstdio>
#include <cstring>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "fdiag/ingest.hpp"
#include "fdiag/nets.hpp"

namespace {

struct Channel {
    FILE* in;
    FILE* out;
    std::optional<std::string> line() {
        std::string s;
        int ch;
        while ((ch = std::fgetc(in)) != EOF && ch != '\n') s.push_back(static_cast<char>(ch));
        if (ch == EOF && s.empty()) return std::nullopt;
        return s;
    }
    void send(const std::string& s) {
        std::fputs((s + "\n").c_str(), out);
        std::fflush(out);
    }
};

int serve(Channel ch, const std::string& mode) {
    std::optional<fdiag::Model> model;
    if (mode.rfind("model=", 0) == 0) model = fdiag::load_checkpoint(mode.substr(6));
    while (auto line = ch.line()) {
        std::istringstream ls(*line);
        std::string verb;
        ls >> verb;
        if (verb == "HELLO") {
            ch.send(mode == "badhello" ? "NOPE" : "OK mock-" + mode.substr(0, mode.find('=')));
        } else if (verb == "BYE") {
            return 0;
        } else if (verb == "SCORE") {
            std::size_t h = 0, w = 0, c = 0;
            std::string path;
            ls >> h >> w >> c >> path;
            if (mode == "hang") continue;
            if (mode == "error") {
                ch.send("ERR refusing to score");
                continue;
            }
            if (mode == "garbage") {
                ch.send("about 0.5");
                continue;
            }
            if (mode == "nan") {
                ch.send("nan");
                continue;
            }
            try {
                const fdiag::ImageTensor img = fdiag::read_raw(path, h, w, c);
                double score = 0.0;
                if (mode == "mean") score = fdiag::mean(img);
                if (model) score = fdiag::forward(*model, img);
                char buf[64];
                std::snprintf(buf, sizeof buf, "%.17g", score);
                ch.send(buf);
            } catch (const std::exception& e) {
                ch.send(std::string("ERR ") + e.what());
            }
        } else {
            ch.send("ERR unknown request");
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::string mode = "echo";
    std::optional<int> port;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        if (flag == "--mode") mode = argv[i + 1];
        if (flag == "--tcp") port = std::stoi(argv[i + 1]);
    }
    if (!port) return serve({stdin, stdout}, mode);

    const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(*port));
    if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(srv, 1) != 0) {
        std::perror("mock_scorer");
        return 1;
    }
    socklen_t len = sizeof addr;
    ::getsockname(srv, reinterpret_cast<sockaddr*>(&addr), &len);
    std::printf("%d\n", ntohs(addr.sin_port));
    std::fflush(stdout);
    const int conn = ::accept(srv, nullptr, nullptr);
    ::close(srv);
    if (conn < 0) return 1;
    FILE* in = ::fdopen(conn, "r");
    FILE* out = ::fdopen(::dup(conn), "w");
    const int rc = serve({in, out}, mode);
    std::fclose(in);
    std::fclose(out);
    return rc;
}
