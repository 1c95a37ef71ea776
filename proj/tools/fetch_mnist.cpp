#include "fetch_mnist.hpp"

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <openssl/evp.h>
#include <zlib.h>

namespace spikekit::tools {

namespace {

struct MnistFile {
  const char* name;    // decompressed IDX file name
  const char* gz_md5;  // md5 of the .gz archive
};

// Checksums of the canonical distribution archives.
constexpr std::array<MnistFile, 4> kFiles = {{
    {"train-images-idx3-ubyte", "f68b3c2dcbeaaa9fbdd348bbdeb94873"},
    {"train-labels-idx1-ubyte", "d53e105ee54ea40749a09fcbcd1e9432"},
    {"t10k-images-idx3-ubyte", "9fb629c4189551a2d022fa330f9573f3"},
    {"t10k-labels-idx1-ubyte", "ec29112dd5afa0611ce80d1b7f02629c"},
}};

constexpr std::array<const char*, 2> kMirrors = {
    "https://ossci-datasets.s3.amazonaws.com",
    "https://storage.googleapis.com",
};
constexpr std::array<const char*, 2> kMirrorPrefix = {
    "/mnist/",
    "/cvdf-datasets/mnist/",
};

std::string md5_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_md5(), nullptr);
  EVP_DigestUpdate(ctx, data.data(), data.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

bool gunzip(const std::string& compressed, std::string& out) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) return false;
  zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(compressed.data()));
  zs.avail_in = static_cast<uInt>(compressed.size());
  std::vector<char> buf(1 << 20);
  int ret = Z_OK;
  while (ret != Z_STREAM_END) {
    zs.next_out = reinterpret_cast<Bytef*>(buf.data());
    zs.avail_out = static_cast<uInt>(buf.size());
    ret = inflate(&zs, Z_NO_FLUSH);
    if (ret != Z_OK && ret != Z_STREAM_END) {
      inflateEnd(&zs);
      return false;
    }
    out.append(buf.data(), buf.size() - zs.avail_out);
  }
  inflateEnd(&zs);
  return true;
}

bool download(const std::string& gz_name, std::string& body) {
  for (size_t m = 0; m < kMirrors.size(); ++m) {
    httplib::Client client(kMirrors[m]);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    client.set_follow_location(true);
    const std::string path = std::string(kMirrorPrefix[m]) + gz_name;
    auto res = client.Get(path);
    if (res && res->status == 200) {
      body = std::move(res->body);
      return true;
    }
    std::cerr << "  " << kMirrors[m] << path << ": "
              << (res ? "HTTP " + std::to_string(res->status)
                      : "connection failed")
              << "\n";
  }
  return false;
}

}  // namespace

int fetch_mnist(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  bool all_ok = true;
  for (const MnistFile& f : kFiles) {
    const fs::path target = fs::path(dir) / f.name;
    if (fs::exists(target)) {
      std::cout << f.name << ": already present\n";
      continue;
    }
    const std::string gz_name = std::string(f.name) + ".gz";
    std::cout << "fetching " << gz_name << "\n";
    std::string body;
    if (!download(gz_name, body)) {
      std::cerr << f.name << ": download failed on all mirrors\n";
      all_ok = false;
      continue;
    }
    const std::string got_md5 = md5_hex(body);
    if (got_md5 != f.gz_md5) {
      std::cerr << f.name << ": checksum mismatch (" << got_md5 << " != "
                << f.gz_md5 << ")\n";
      all_ok = false;
      continue;
    }
    std::string idx;
    if (!gunzip(body, idx)) {
      std::cerr << f.name << ": decompression failed\n";
      all_ok = false;
      continue;
    }
    std::ofstream out(target, std::ios::binary);
    out.write(idx.data(), static_cast<std::streamsize>(idx.size()));
    std::cout << f.name << ": " << idx.size() << " bytes\n";
  }
  return all_ok ? 0 : 2;
}

}  // namespace spikekit::tools
