#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace neuroink {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCategory { usage = 2, data = 3, runtime = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, std::string code, const std::string& msg)
        : std::runtime_error(code + ": " + msg), cat_(cat), code_(std::move(code)) {}

    ErrorCategory category() const { return cat_; }
    const std::string& code() const { return code_; }

    static Error usage(std::string code, const std::string& msg) {
        return Error(ErrorCategory::usage, std::move(code), msg);
    }
    static Error data(std::string code, const std::string& msg) {
        return Error(ErrorCategory::data, std::move(code), msg);
    }
    static Error runtime(std::string code, const std::string& msg) {
        return Error(ErrorCategory::runtime, std::move(code), msg);
    }

private:
    ErrorCategory cat_;
    std::string code_;
};

// Non-fatal diagnostics collected by operations that must not abort
// (quarantine logs, degenerate-input notices, layout warnings).
struct WarningRecord {
    std::string code;
    std::string detail;
};

using WarningLog = std::vector<WarningRecord>;

// FNV-1a over a canonical string rendering of the effective parameters.
// Stable across runs and platforms; used for artifact digests.
inline std::string fnv1a_digest(std::string_view data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[i] = hex[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline std::string read_text_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error::data("MissingFile", "cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text_file(const std::filesystem::path& p, std::string_view content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error::runtime("WriteFailure", "cannot write " + p.string());
    out << content;
}

}  // namespace neuroink
