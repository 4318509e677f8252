#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "mfsr/imageio.hpp"

namespace {

using namespace mfsr;
namespace fs = std::filesystem;

class ImageIo : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("mfsr_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path path(const std::string& name) const { return dir_ / name; }

    void write_raw(const fs::path& p, const std::string& bytes) const {
        std::ofstream out(p, std::ios::binary);
        out << bytes;
    }

    fs::path dir_;
};

Image gradient_image(int h, int w) {
    Image img(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) img(r, c) = (r * 17 + c * 5) % 256;
    return img;
}

TEST_F(ImageIo, PgmRoundTrip) {
    const Image img = gradient_image(7, 11);
    write_image(img, path("a.pgm"));
    EXPECT_EQ(read_image(path("a.pgm")), img);
}

TEST_F(ImageIo, PngRoundTrip) {
    const Image img = gradient_image(9, 6);
    write_image(img, path("a.png"));
    const ColorImage back = read_color_image(path("a.png"));
    EXPECT_FALSE(back.is_color());
    EXPECT_EQ(back.y, img);
}

TEST_F(ImageIo, QuantizesOnWrite) {
    Image img(1, 4, {-3.0, 12.4, 12.6, 300.0});
    write_image(img, path("q.pgm"));
    EXPECT_EQ(read_image(path("q.pgm")).vector(), (std::vector<double>{0, 12, 13, 255}));
}

TEST_F(ImageIo, PgmHeaderWithComments) {
    std::string bytes = "P5\n# comment\n2 1\n# another\n255\n";
    bytes += static_cast<char>(7);
    bytes += static_cast<char>(200);
    write_raw(path("c.pgm"), bytes);
    EXPECT_EQ(read_image(path("c.pgm")).vector(), (std::vector<double>{7, 200}));
}

TEST_F(ImageIo, RejectsTruncatedPgm) {
    write_raw(path("t.pgm"), "P5\n4 4\n255\nabc");
    try {
        read_image(path("t.pgm"));
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos);
    }
}

TEST_F(ImageIo, RejectsSixteenBitPgm) {
    write_raw(path("w.pgm"), "P5\n1 1\n65535\n\x01\x02");
    EXPECT_THROW(read_image(path("w.pgm")), IoError);
}

TEST_F(ImageIo, RejectsUnknownFormatAndMissingFile) {
    write_raw(path("x.bmp"), "BM junk");
    EXPECT_THROW(read_image(path("x.bmp")), IoError);
    EXPECT_THROW(read_image(path("missing.png")), IoError);
}

TEST_F(ImageIo, ColorRoundTripKeepsChroma) {
    ColorImage img;
    img.y = Image(2, 2, {100, 150, 50, 200});
    img.cb = Image(2, 2, {128, 100, 160, 128});
    img.cr = Image(2, 2, {128, 140, 120, 90});
    write_color_image(img, path("rgb.png"));
    const ColorImage back = read_color_image(path("rgb.png"));
    ASSERT_TRUE(back.is_color());
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(back.y.values()[i], img.y.values()[i], 1.0);
        EXPECT_NEAR(back.cb->values()[i], img.cb->values()[i], 1.5);
        EXPECT_NEAR(back.cr->values()[i], img.cr->values()[i], 1.5);
    }
    EXPECT_THROW(write_color_image(img, path("rgb.pgm")), IoError);
}

TEST(ColorMath, GrayHasNeutralChroma) {
    EXPECT_NEAR(rgb_to_y(90, 90, 90), 90.0, 1e-12);
    EXPECT_NEAR(rgb_to_cb(90, 90, 90), 128.0, 1e-9);
    EXPECT_NEAR(rgb_to_cr(90, 90, 90), 128.0, 1e-9);
}

TEST_F(ImageIo, DictionaryRoundTripIsExact) {
    std::mt19937_64 gen(1);
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::MatrixXd a(9, 4);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = n(gen);
    write_dictionary(Dictionary(a), path("d.bin"));
    const Dictionary back = read_dictionary(path("d.bin"));
    EXPECT_EQ(back.dim(), 9);
    EXPECT_EQ(back.count(), 4);
    EXPECT_TRUE(back.atoms() == a);
}

TEST_F(ImageIo, DictionaryRejectsBadMagic) {
    write_raw(path("bad.bin"), "NOTADICT00000000");
    try {
        read_dictionary(path("bad.bin"));
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("MFSRDIC1"), std::string::npos);
    }
}

TEST_F(ImageIo, DictionaryRejectsSizeMismatch) {
    write_dictionary(Dictionary(Eigen::MatrixXd::Identity(3, 3)), path("d.bin"));
    fs::resize_file(path("d.bin"), fs::file_size(path("d.bin")) - 8);
    EXPECT_THROW(read_dictionary(path("d.bin")), IoError);
}

}  // namespace
