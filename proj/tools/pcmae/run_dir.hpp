#pragma once

#include <filesystem>
#include <string>

namespace pcmae::cli {

/// Exclusive claim on a run directory through an O_EXCL lock file, released
/// on destruction. Throws std::runtime_error if another process holds it.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
};

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);
void append_line(const std::filesystem::path& path, const std::string& line);

}  // namespace pcmae::cli
