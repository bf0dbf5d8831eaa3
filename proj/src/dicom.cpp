#include "dsaqc/dicom.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>

#include "dsaqc/errors.hpp"

namespace dsaqc::dicom {

namespace {

constexpr std::string_view kImplicitLE = "1.2.840.10008.1.2";
constexpr std::string_view kExplicitLE = "1.2.840.10008.1.2.1";
constexpr std::uint32_t kUndefined = 0xFFFFFFFFu;

constexpr std::uint32_t tag(std::uint16_t g, std::uint16_t e) { return (std::uint32_t{g} << 16) | e; }

bool long_form_vr(std::string_view vr) {
  return vr == "OB" || vr == "OW" || vr == "OF" || vr == "SQ" || vr == "UT" || vr == "UN" ||
         vr == "UC" || vr == "UR" || vr == "OD" || vr == "OL" || vr == "OV" || vr == "SV" ||
         vr == "UV";
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\0')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string origin)
      : buf_(std::move(bytes)), origin_(std::move(origin)) {}

  Dataset parse() {
    if (buf_.size() < 132 || std::memcmp(buf_.data() + 128, "DICM", 4) != 0) {
      fail("missing DICM preamble");
    }
    pos_ = 132;
    std::string transfer_syntax;
    // File meta group is always explicit VR little endian.
    while (pos_ + 4 <= buf_.size() && u16(pos_) == 0x0002) {
      Element el = next(true);
      if (el.tag == tag(0x0002, 0x0010)) transfer_syntax = trim(text(el));
      pos_ = el.value_end;
    }
    bool explicit_vr;
    if (transfer_syntax == kExplicitLE) {
      explicit_vr = true;
    } else if (transfer_syntax == kImplicitLE || transfer_syntax.empty()) {
      explicit_vr = false;
    } else {
      throw UnsupportedError(origin_ + ": unsupported transfer syntax " + transfer_syntax);
    }
    Dataset ds;
    bool have_pixels = false;
    while (pos_ < buf_.size()) {
      Element el = next(explicit_vr);
      if (el.length == kUndefined) {
        if (el.tag == tag(0x7FE0, 0x0010)) {
          throw UnsupportedError(origin_ + ": encapsulated (compressed) pixel data is not supported");
        }
        skip_undefined(explicit_vr);
        continue;
      }
      if (el.value_end > buf_.size()) fail("element overruns end of file");
      switch (el.tag) {
        case tag(0x0010, 0x0020): ds.patient_id = trim(text(el)); break;
        case tag(0x0020, 0x000E): ds.series_uid = trim(text(el)); break;
        case tag(0x0008, 0x0018): ds.sop_instance_uid = trim(text(el)); break;
        case tag(0x0020, 0x0013): ds.instance_number = std::stoi("0" + trim(text(el))); break;
        case tag(0x0028, 0x0002):
          if (u16(el.value_begin) != 1) throw UnsupportedError(origin_ + ": only single-sample pixels are supported");
          break;
        case tag(0x0028, 0x0008): ds.frames = std::stoi("0" + trim(text(el))); break;
        case tag(0x0028, 0x0010): ds.rows = u16(el.value_begin); break;
        case tag(0x0028, 0x0011): ds.columns = u16(el.value_begin); break;
        case tag(0x0028, 0x0100): ds.bits_allocated = u16(el.value_begin); break;
        case tag(0x0028, 0x0103): ds.pixel_representation = u16(el.value_begin); break;
        case tag(0x0028, 0x1052): ds.rescale_intercept = std::stod("0" + trim(text(el))); break;
        case tag(0x0028, 0x1053): ds.rescale_slope = std::stod(trim(text(el))); break;
        case tag(0x7FE0, 0x0010):
          decode_pixels(ds, el);
          have_pixels = true;
          break;
        default: break;
      }
      pos_ = el.value_end;
    }
    if (!have_pixels) fail("no pixel data element");
    return ds;
  }

 private:
  struct Element {
    std::uint32_t tag;
    std::uint32_t length;
    std::size_t value_begin;
    std::size_t value_end;
  };

  [[noreturn]] void fail(const std::string& why) const { throw MalformedInputError(origin_ + ": " + why); }

  std::uint16_t u16(std::size_t at) const {
    if (at + 2 > buf_.size()) fail("truncated element");
    return static_cast<std::uint16_t>(buf_[at] | (buf_[at + 1] << 8));
  }
  std::uint32_t u32(std::size_t at) const {
    if (at + 4 > buf_.size()) fail("truncated element");
    return std::uint32_t{buf_[at]} | (std::uint32_t{buf_[at + 1]} << 8) |
           (std::uint32_t{buf_[at + 2]} << 16) | (std::uint32_t{buf_[at + 3]} << 24);
  }
  std::string text(const Element& el) const {
    return std::string(reinterpret_cast<const char*>(buf_.data() + el.value_begin), el.length);
  }

  Element next(bool explicit_vr) {
    Element el{};
    const std::uint16_t group = u16(pos_);
    const std::uint16_t elem = u16(pos_ + 2);
    el.tag = tag(group, elem);
    std::size_t p = pos_ + 4;
    if (group == 0xFFFE) {
      // Item and delimiter tags carry no VR in any transfer syntax.
      el.length = u32(p);
      p += 4;
    } else if (explicit_vr) {
      if (p + 2 > buf_.size()) fail("truncated VR");
      const std::string_view vr(reinterpret_cast<const char*>(buf_.data() + p), 2);
      p += 2;
      if (long_form_vr(vr)) {
        el.length = u32(p + 2);
        p += 6;
      } else {
        el.length = u16(p);
        p += 2;
      }
    } else {
      el.length = u32(p);
      p += 4;
    }
    el.value_begin = p;
    el.value_end = el.length == kUndefined ? p : p + el.length;
    pos_ = el.value_begin;
    return el;
  }

  // Consumes nested items up to the matching sequence delimiter.
  void skip_undefined(bool explicit_vr) {
    int depth = 1;
    while (depth > 0) {
      if (pos_ >= buf_.size()) fail("unterminated sequence");
      Element el = next(explicit_vr);
      if (el.tag == tag(0xFFFE, 0xE0DD) || el.tag == tag(0xFFFE, 0xE00D)) {
        --depth;
        pos_ = el.value_end;
      } else if (el.length == kUndefined) {
        ++depth;
      } else if (el.tag == tag(0xFFFE, 0xE000)) {
        pos_ = el.value_end;
      } else {
        pos_ = el.value_end;
      }
    }
  }

  void decode_pixels(Dataset& ds, const Element& el) {
    if (ds.rows <= 0 || ds.columns <= 0) fail("pixel data precedes or lacks Rows/Columns");
    if (ds.frames < 1) fail("zero frames");
    if (ds.bits_allocated != 8 && ds.bits_allocated != 16) {
      throw UnsupportedError(origin_ + ": BitsAllocated " + std::to_string(ds.bits_allocated) + " is not supported");
    }
    const std::size_t count = static_cast<std::size_t>(ds.frames) * ds.rows * ds.columns;
    const std::size_t bytes = count * (ds.bits_allocated / 8);
    if (el.length < bytes) fail("pixel data shorter than Rows x Columns x Frames");
    ds.stored.resize(count);
    const unsigned char* p = buf_.data() + el.value_begin;
    for (std::size_t i = 0; i < count; ++i) {
      if (ds.bits_allocated == 8) {
        ds.stored[i] = ds.pixel_representation ? static_cast<std::int8_t>(p[i]) : p[i];
      } else {
        const auto raw = static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8));
        ds.stored[i] = ds.pixel_representation ? static_cast<std::int16_t>(raw) : raw;
      }
    }
  }

  std::vector<unsigned char> buf_;
  std::string origin_;
  std::size_t pos_ = 0;
};

class Writer {
 public:
  void element(std::uint16_t g, std::uint16_t e, std::string_view vr, std::string_view value) {
    std::string v(value);
    if (v.size() % 2) v.push_back(vr == "UI" || vr == "OB" ? '\0' : ' ');
    header(g, e, vr, static_cast<std::uint32_t>(v.size()));
    out_.append(v);
  }
  void element_us(std::uint16_t g, std::uint16_t e, std::uint16_t value) {
    header(g, e, "US", 2);
    put16(value);
  }
  void element_ul(std::uint16_t g, std::uint16_t e, std::uint32_t value) {
    header(g, e, "UL", 4);
    put32(value);
  }
  void pixel_data(const std::vector<std::uint16_t>& values) {
    header(0x7FE0, 0x0010, "OW", static_cast<std::uint32_t>(values.size() * 2));
    for (std::uint16_t v : values) put16(v);
  }
  std::string take() { return std::move(out_); }
  std::size_t size() const { return out_.size(); }

 private:
  void header(std::uint16_t g, std::uint16_t e, std::string_view vr, std::uint32_t len) {
    put16(g);
    put16(e);
    out_.append(vr);
    if (long_form_vr(vr)) {
      put16(0);
      put32(len);
    } else {
      put16(static_cast<std::uint16_t>(len));
    }
  }
  void put16(std::uint16_t v) {
    out_.push_back(static_cast<char>(v & 0xFF));
    out_.push_back(static_cast<char>(v >> 8));
  }
  void put32(std::uint32_t v) {
    put16(static_cast<std::uint16_t>(v & 0xFFFF));
    put16(static_cast<std::uint16_t>(v >> 16));
  }
  std::string out_;
};

}  // namespace

bool looks_like_dicom(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char buf[132];
  if (!in.read(buf, sizeof buf)) return false;
  return std::memcmp(buf + 128, "DICM", 4) == 0;
}

Dataset read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) throw NotFoundError("no such file", path.string());
    throw IoError("cannot open for reading", path.string());
  }
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return Reader(std::move(bytes), path.string()).parse();
}

void write_multiframe(const std::filesystem::path& path, const std::string& patient_id,
                      const std::string& series_uid, int rows, int columns,
                      const std::vector<std::uint16_t>& frames_data) {
  const std::size_t per_frame = static_cast<std::size_t>(rows) * columns;
  if (per_frame == 0 || frames_data.empty() || frames_data.size() % per_frame != 0) {
    throw ValidationError("frame buffer is not a whole number of " + std::to_string(rows) + "x" +
                          std::to_string(columns) + " frames");
  }
  const int frames = static_cast<int>(frames_data.size() / per_frame);
  constexpr std::string_view sop_class = "1.2.840.10008.5.1.4.1.1.12.1";
  const std::string sop_instance = series_uid + ".1";

  Writer meta;
  meta.element(0x0002, 0x0001, "OB", std::string("\0\1", 2));
  meta.element(0x0002, 0x0002, "UI", sop_class);
  meta.element(0x0002, 0x0003, "UI", sop_instance);
  meta.element(0x0002, 0x0010, "UI", kExplicitLE);
  meta.element(0x0002, 0x0012, "UI", "1.2.826.0.1.3680043.10.1");
  const std::string meta_body = meta.take();

  Writer group_length;
  group_length.element_ul(0x0002, 0x0000, static_cast<std::uint32_t>(meta_body.size()));
  const std::string gl = group_length.take();

  Writer body;
  body.element(0x0008, 0x0016, "UI", sop_class);
  body.element(0x0008, 0x0018, "UI", sop_instance);
  body.element(0x0008, 0x0060, "CS", "XA");
  body.element(0x0010, 0x0020, "LO", patient_id);
  body.element(0x0020, 0x000E, "UI", series_uid);
  body.element(0x0020, 0x0013, "IS", "1");
  body.element_us(0x0028, 0x0002, 1);
  body.element(0x0028, 0x0004, "CS", "MONOCHROME2");
  body.element(0x0028, 0x0008, "IS", std::to_string(frames));
  body.element_us(0x0028, 0x0010, static_cast<std::uint16_t>(rows));
  body.element_us(0x0028, 0x0011, static_cast<std::uint16_t>(columns));
  body.element_us(0x0028, 0x0100, 16);
  body.element_us(0x0028, 0x0101, 16);
  body.element_us(0x0028, 0x0102, 15);
  body.element_us(0x0028, 0x0103, 0);
  body.pixel_data(frames_data);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing", path.string());
  const std::string preamble(128, '\0');
  out << preamble << "DICM" << gl << meta_body << body.take();
  if (!out) throw IoError("write failed", path.string());
}

}  // namespace dsaqc::dicom
