#include "artifacts.hpp"

#include <fstream>
#include <iomanip>
#include <locale>
#include <memory>
#include <sstream>

#include <openssl/evp.h>

namespace mvlab::cli {

std::string sha256_hex(const std::string& bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw std::runtime_error("SHA-256 computation failed");
    std::ostringstream hex;
    for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return hex.str();
}

void Assertions::check(const std::string& name, bool passed, const std::string& detail) {
    records_.push_back({name, passed, detail});
    if (!passed && strict_) throw StrictStop(name + ": " + detail);
}

void Assertions::warn(const std::string& message) {
    warnings_.push_back(message);
    if (strict_) check("warning", false, message);
}

bool Assertions::all_passed() const {
    for (const auto& r : records_)
        if (!r.passed) return false;
    return true;
}

ArtifactWriter::ArtifactWriter(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

void ArtifactWriter::write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ostringstream buf;
    buf.imbue(std::locale::classic());
    body(buf);
    write_text(name, buf.str());
}

void ArtifactWriter::write_text(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    if (!out) throw std::runtime_error("failed writing " + (dir_ / name).string());
    entries_.push_back({name, sha256_hex(content), content.size()});
}

}  // namespace mvlab::cli
