#include "cotforge/util.hpp"

#include "cotforge/errors.hpp"

#include <openssl/evp.h>

#include <cctype>
#include <iostream>
#include <mutex>

namespace cotforge {

namespace {
std::mutex g_warn_mutex;
WarningHandler g_warn_handler;
} // namespace

std::string trim(std::string_view s) {
    size_t begin = 0;
    size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

void set_warning_handler(WarningHandler handler) {
    std::lock_guard lock(g_warn_mutex);
    g_warn_handler = std::move(handler);
}

void warn(const std::string& message) {
    std::lock_guard lock(g_warn_mutex);
    if (g_warn_handler) {
        g_warn_handler(message);
    } else {
        std::cerr << "[cotforge] warning: " << message << "\n";
    }
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

std::string fill_placeholders(std::string_view text,
                              const std::vector<std::pair<std::string, std::string>>& values) {
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        if (text[i] != '{') {
            out.push_back(text[i++]);
            continue;
        }
        size_t close = text.find('}', i);
        if (close == std::string_view::npos) {
            throw ParseError("unterminated placeholder in template near offset " + std::to_string(i));
        }
        std::string key(text.substr(i + 1, close - i - 1));
        bool found = false;
        for (const auto& [name, value] : values) {
            if (name == key) {
                out += value;
                found = true;
                break;
            }
        }
        if (!found) throw ParseError("unknown placeholder {" + key + "} in template");
        i = close + 1;
    }
    return out;
}

} // namespace cotforge
