"""Reference MS-SSIM in plain numpy, used to freeze the values in test_trainer.cpp.

Gaussian window (11, sigma 1.5, 'valid' filtering), K1 = 0.01, K2 = 0.03,
data range 1, 2x2 average pooling between scales, weights renormalized when
the frame is too small for five scales, window shrunk to the largest odd size
that fits when the frame is smaller than the window. Channels are averaged
after the product over scales.

    python3 tests/oracles/ms_ssim_ref.py
"""
import numpy as np

WEIGHTS = np.array([0.0448, 0.2856, 0.3001, 0.2363, 0.1333])


def pattern(size, channels=3):
    i, j = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    x = np.stack([0.5 + 0.4 * np.sin(0.3 * i + 0.7 * j + c) * np.cos(0.11 * i * (c + 1) - 0.05 * j)
                  for c in range(channels)])
    y = np.stack([np.clip(x[c] + 0.15 * np.cos(1.3 * i - 0.4 * j * (c + 1)) + 0.05 * np.sin(0.9 * j), 0.0, 1.0)
                  for c in range(channels)])
    return x, y


def window_1d(size, sigma):
    r = size // 2
    k = np.exp(-(np.arange(-r, r + 1) ** 2) / (2.0 * sigma * sigma))
    return k / k.sum()


def filt(img, k):
    n = len(k)
    h, w = img.shape
    rows = np.array([[np.dot(img[a, b:b + n], k) for b in range(w - n + 1)] for a in range(h)])
    return np.array([[np.dot(rows[a:a + n, b], k) for b in range(rows.shape[1])] for a in range(h - n + 1)])


def pool(img):
    h, w = img.shape[0] // 2 * 2, img.shape[1] // 2 * 2
    img = img[:h, :w]
    return 0.25 * (img[0::2, 0::2] + img[1::2, 0::2] + img[0::2, 1::2] + img[1::2, 1::2])


def ms_ssim_channel(a, b, window=11, sigma=1.5):
    m = min(a.shape)
    if m < window:
        window = m if m % 2 == 1 else m - 1
    scales = 1
    while scales < 5 and (m >> scales) >= window:
        scales += 1
    w = WEIGHTS[:scales] / WEIGHTS[:scales].sum()
    k = window_1d(window, sigma)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    out = 1.0
    for s in range(scales):
        mu_a, mu_b = filt(a, k), filt(b, k)
        va = filt(a * a, k) - mu_a ** 2
        vb = filt(b * b, k) - mu_b ** 2
        cov = filt(a * b, k) - mu_a * mu_b
        cs = (2 * cov + c2) / (va + vb + c2)
        if s + 1 < scales:
            out *= max(cs.mean(), 0.0) ** w[s]
            a, b = pool(a), pool(b)
        else:
            lum = (2 * mu_a * mu_b + c1) / (mu_a ** 2 + mu_b ** 2 + c1)
            out *= max((lum * cs).mean(), 0.0) ** w[s]
    return out, scales


def ms_ssim(x, y):
    vals = [ms_ssim_channel(x[c], y[c]) for c in range(x.shape[0])]
    return float(np.mean([v for v, _ in vals])), vals[0][1]


if __name__ == "__main__":
    for size in (8, 32, 64, 176):
        x, y = pattern(size)
        v, scales = ms_ssim(x, y)
        inv, _ = ms_ssim(x, 1.0 - x)
        print(f"size {size:4d}  scales {scales}  ms_ssim(x, y) = {v:.12f}  ms_ssim(x, 1-x) = {inv:.12f}")
