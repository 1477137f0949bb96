//! Periodogram PSD estimation, tone-peak RSS capture and the fingerprint
//! database built from them.

use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex, Fft, FftPlanner};

use crate::{Error, Point2, Result};

/// Lower clamp for RSS values, guarding `log10(0)`.
pub const DEFAULT_DB_FLOOR: f64 = -300.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub bin_values: Vec<f64>,
    pub bin_hz: f64,
    pub fft_len: usize,
}

impl PsdEstimate {
    pub fn sample_rate(&self) -> f64 {
        self.bin_hz * self.fft_len as f64
    }
}

/// One RSS fingerprint: the PSD peak (dB) read at each tone frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct RssVector {
    pub values: Vec<f64>,
    pub frequencies: Vec<f64>,
}

impl RssVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reusable forward FFT of a fixed length.
#[derive(Clone)]
pub struct Periodogram {
    fft: Arc<dyn Fft<f64>>,
    len: usize,
}

impl std::fmt::Debug for Periodogram {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Periodogram").field("len", &self.len).finish()
    }
}

impl Periodogram {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(Error::domain(format!("periodogram needs at least 2 samples, got {len}")));
        }
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Periodogram { fft, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `(1/N) |DFT_N(samples)[k]|^2` for every bin `k`.
    pub fn bins(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.len {
            return Err(Error::Dimension(format!(
                "block of {} samples given to a {}-point periodogram",
                samples.len(),
                self.len
            )));
        }
        let mut buf: Vec<Complex<f64>> = samples.iter().map(|&s| Complex::new(s, 0.0)).collect();
        self.fft.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        Ok(buf.iter().map(|c| c.norm_sqr() * scale).collect())
    }

    pub fn estimate(&self, samples: &[f64], sample_rate: f64) -> Result<PsdEstimate> {
        Ok(PsdEstimate {
            bin_values: self.bins(samples)?,
            bin_hz: sample_rate / self.len as f64,
            fft_len: self.len,
        })
    }
}

/// Periodogram of a whole block; `sample_rate` only sets the bin spacing.
pub fn periodogram(samples: &[f64], sample_rate: f64) -> Result<PsdEstimate> {
    if samples.is_empty() {
        return Err(Error::domain("periodogram of an empty block"));
    }
    Periodogram::new(samples.len())?.estimate(samples, sample_rate)
}

pub fn to_db(power: f64, floor: f64) -> f64 {
    if power > 0.0 {
        (10.0 * power.log10()).max(floor)
    } else {
        floor
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Nominal bin of `freq` and its signed distance from the bin center, in bins.
pub fn tone_bin(freq: f64, fft_len: usize, sample_rate: f64) -> (usize, f64) {
    let exact = freq * fft_len as f64 / sample_rate;
    let k = exact.round();
    (k as usize, exact - k)
}

/// Whether every tone falls exactly on a DFT bin for this length and rate.
pub fn tones_on_bin(tones: &[f64], fft_len: usize, sample_rate: f64) -> Vec<bool> {
    tones
        .iter()
        .map(|&f| tone_bin(f, fft_len, sample_rate).1.abs() < 1e-9)
        .collect()
}

fn check_tones(tones: &[f64], sample_rate: f64) -> Result<()> {
    if tones.is_empty() {
        return Err(Error::domain("at least one tone is required"));
    }
    for &f in tones {
        if !(f >= 0.0) || f > sample_rate / 2.0 {
            return Err(Error::domain(format!(
                "tone {f} Hz lies outside [0, Nyquist = {} Hz]",
                sample_rate / 2.0
            )));
        }
    }
    if tones.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("tone frequencies must be strictly increasing"));
    }
    Ok(())
}

fn peak_db(bins: &[f64], fft_len: usize, sample_rate: f64, f: f64, floor: f64) -> f64 {
    let (k, _) = tone_bin(f, fft_len, sample_rate);
    let hi = (k + 1).min(fft_len / 2);
    let lo = k.saturating_sub(1);
    let peak = bins[lo..=hi].iter().copied().fold(0.0, f64::max);
    to_db(peak, floor)
}

/// Reads the largest bin within one bin of each tone's nominal bin, in dB.
pub fn extract_rss(psd: &PsdEstimate, tones: &[f64], db_floor: f64) -> Result<RssVector> {
    let fs = psd.sample_rate();
    check_tones(tones, fs)?;
    let values = tones
        .iter()
        .map(|&f| peak_db(&psd.bin_values, psd.fft_len, fs, f, db_floor))
        .collect();
    Ok(RssVector {
        values,
        frequencies: tones.to_vec(),
    })
}

/// RSS vectors of the `floor(T / N)` non-overlapping `N`-blocks of a stream.
pub fn rss_blocks(
    stream: &[f64],
    fft_len: usize,
    sample_rate: f64,
    tones: &[f64],
    db_floor: f64,
) -> Result<Vec<Vec<f64>>> {
    check_tones(tones, sample_rate)?;
    let pg = Periodogram::new(fft_len)?;
    if stream.len() < fft_len {
        return Err(Error::domain(format!(
            "stream of {} samples is shorter than the FFT length {fft_len}",
            stream.len()
        )));
    }
    stream
        .chunks_exact(fft_len)
        .map(|block| {
            let bins = pg.bins(block)?;
            Ok(tones
                .iter()
                .map(|&f| peak_db(&bins, fft_len, sample_rate, f, db_floor))
                .collect())
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbMeta {
    pub fft_len: usize,
    pub sample_rate: f64,
}

/// Fingerprints of the site survey: `Q` RSS vectors (dB) per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDb {
    pub grid: Vec<Point2>,
    /// `samples[g][q]` is the `q`-th RSS vector of grid point `g`.
    pub samples: Vec<Vec<Vec<f64>>>,
    pub tones: Vec<f64>,
    pub meta: DbMeta,
}

impl FingerprintDb {
    pub fn new(
        grid: Vec<Point2>,
        samples: Vec<Vec<Vec<f64>>>,
        tones: Vec<f64>,
        meta: DbMeta,
    ) -> Result<Self> {
        let db = FingerprintDb {
            grid,
            samples,
            tones,
            meta,
        };
        db.validate()?;
        Ok(db)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.len() != self.samples.len() {
            return Err(Error::Dimension(format!(
                "{} grid points but {} sample sets",
                self.grid.len(),
                self.samples.len()
            )));
        }
        let q = self.q();
        let m = self.m();
        for (g, set) in self.samples.iter().enumerate() {
            if set.len() != q {
                return Err(Error::Dimension(format!("grid {g} has {} vectors, expected {q}", set.len())));
            }
            if set.iter().any(|v| v.len() != m) {
                return Err(Error::Dimension(format!("grid {g} holds a vector whose length is not {m}")));
            }
            if set.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("grid {g} holds a non-finite RSS value")));
            }
        }
        Ok(())
    }

    pub fn g(&self) -> usize {
        self.grid.len()
    }

    pub fn q(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn m(&self) -> usize {
        self.tones.len()
    }

    pub fn rss_vector(&self, g: usize, q: usize) -> RssVector {
        RssVector {
            values: self.samples[g][q].clone(),
            frequencies: self.tones.clone(),
        }
    }

    /// Rounds every stored number to the precision of the text format, so
    /// an in-memory database and its re-read file are identical.
    pub fn quantized(&self) -> Self {
        let q9 = |v: f64| -> f64 { format!("{v:.8e}").parse().unwrap_or(v) };
        FingerprintDb {
            grid: self.grid.iter().map(|p| Point2::new(q9(p.x), q9(p.y))).collect(),
            samples: self
                .samples
                .iter()
                .map(|set| set.iter().map(|v| v.iter().map(|&x| q9(x)).collect()).collect())
                .collect(),
            tones: self.tones.clone(),
            meta: self.meta,
        }
    }

    /// Text form:
    ///
    /// ```text
    /// # vlcloc fingerprint db v1; rss unit dB
    /// G Q M N sample_rate
    /// f_1 ... f_M
    /// x_g y_g            (per grid point)
    /// r_1 ... r_M        (Q rows)
    /// ```
    ///
    /// Coordinates and RSS values use 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vlcloc fingerprint db v1; rss unit dB");
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            self.g(),
            self.q(),
            self.m(),
            self.meta.fft_len,
            self.meta.sample_rate
        );
        let tones: Vec<String> = self.tones.iter().map(|f| f.to_string()).collect();
        let _ = writeln!(s, "{}", tones.join(" "));
        for (p, set) in self.grid.iter().zip(&self.samples) {
            let _ = writeln!(s, "{:.8e} {:.8e}", p.x, p.y);
            for v in set {
                let row: Vec<String> = v.iter().map(|x| format!("{x:.8e}")).collect();
                let _ = writeln!(s, "{}", row.join(" "));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        fn next_line<'a>(
            it: &mut impl Iterator<Item = (usize, &'a str)>,
            what: &str,
        ) -> Result<(usize, &'a str)> {
            it.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("unexpected end of file, expected {what}"),
            })
        }
        fn numbers<T: std::str::FromStr>(line: usize, s: &str, n: usize) -> Result<Vec<T>> {
            let out: Vec<T> = s
                .split_whitespace()
                .map(|tok| {
                    tok.parse().map_err(|_| Error::Parse {
                        line,
                        msg: format!("bad number `{tok}`"),
                    })
                })
                .collect::<Result<_>>()?;
            if out.len() != n {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {n} fields, found {}", out.len()),
                });
            }
            Ok(out)
        }

        let (ln, header) = next_line(&mut lines, "header")?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: ln,
                msg: "header must be `G Q M N sample_rate`".into(),
            });
        }
        let ints = numbers::<usize>(ln, &fields[..4].join(" "), 4)?;
        let sample_rate = numbers::<f64>(ln, fields[4], 1)?[0];
        let (g, q, m, n) = (ints[0], ints[1], ints[2], ints[3]);

        let (ln, tone_line) = next_line(&mut lines, "tone list")?;
        let tones = numbers::<f64>(ln, tone_line, m)?;

        let mut grid = Vec::with_capacity(g);
        let mut samples = Vec::with_capacity(g);
        for _ in 0..g {
            let (ln, coord) = next_line(&mut lines, "grid coordinate")?;
            let c = numbers::<f64>(ln, coord, 2)?;
            grid.push(Point2::new(c[0], c[1]));
            let mut set = Vec::with_capacity(q);
            for _ in 0..q {
                let (ln, row) = next_line(&mut lines, "RSS row")?;
                set.push(numbers::<f64>(ln, row, m)?);
            }
            samples.push(set);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(Error::Parse {
                line: ln,
                msg: "trailing data after the last grid point".into(),
            });
        }
        FingerprintDb::new(
            grid,
            samples,
            tones,
            DbMeta {
                fft_len: n,
                sample_rate,
            },
        )
    }
}

/// Site survey over pre-recorded streams, one per grid point.
pub fn build_fingerprints(
    grid: &[Point2],
    raw: &[Vec<f64>],
    fft_len: usize,
    sample_rate: f64,
    tones: &[f64],
    db_floor: f64,
) -> Result<FingerprintDb> {
    if grid.len() != raw.len() {
        return Err(Error::Dimension(format!(
            "{} grid points but {} streams",
            grid.len(),
            raw.len()
        )));
    }
    build_fingerprints_with(grid, fft_len, sample_rate, tones, db_floor, |g| Ok(raw[g].clone()))
}

/// Site survey where the stream for grid point `g` is produced on demand by
/// `stream(g)`. Grid points are processed in parallel; only one stream per
/// worker is alive at a time.
pub fn build_fingerprints_with<F>(
    grid: &[Point2],
    fft_len: usize,
    sample_rate: f64,
    tones: &[f64],
    db_floor: f64,
    stream: F,
) -> Result<FingerprintDb>
where
    F: Fn(usize) -> Result<Vec<f64>> + Sync,
{
    check_tones(tones, sample_rate)?;
    if fft_len < 2 {
        return Err(Error::domain("FFT length must be at least 2"));
    }
    let samples: Vec<Vec<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|g| rss_blocks(&stream(g)?, fft_len, sample_rate, tones, db_floor))
        .collect::<Result<_>>()?;
    let q = samples.first().map_or(0, Vec::len);
    if samples.iter().any(|s| s.len() != q) {
        return Err(Error::Dimension("grid streams yield different block counts".into()));
    }
    FingerprintDb::new(
        grid.to_vec(),
        samples,
        tones.to_vec(),
        DbMeta {
            fft_len,
            sample_rate,
        },
    )
}

/// Arithmetic mean (in dB) of each grid point's vectors: a `G x M` table.
pub fn mean_fingerprints(db: &FingerprintDb) -> Vec<Vec<f64>> {
    db.samples.iter().map(|set| column_mean(set, db.m())).collect()
}

pub(crate) fn column_mean(rows: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut acc = vec![0.0; m];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let n = rows.len().max(1) as f64;
    acc.iter().map(|a| a / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N^2) DFT, kept independent of rustfft.
    fn dft_power(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im) / n as f64
            })
            .collect()
    }

    fn tone(n: usize, k: usize, a: f64) -> Vec<f64> {
        (0..n)
            .map(|t| a * (2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64).cos())
            .collect()
    }

    #[test]
    fn constant_block() {
        let p = periodogram(&[0.5; 64], 64.0).unwrap();
        assert_relative_eq!(p.bin_values[0], 64.0 * 0.25, max_relative = 1e-12);
        assert!(p.bin_values[1..].iter().all(|&v| v < 1e-20));
    }

    #[test]
    fn on_bin_cosine_matches_direct_dft() {
        let n = 200;
        let a = 0.7;
        let x = tone(n, 13, a);
        let fast = periodogram(&x, 1.0).unwrap().bin_values;
        let slow = dft_power(&x);
        for (f, s) in fast.iter().zip(&slow) {
            assert!((f - s).abs() < 1e-9 * (1.0 + s.abs()));
        }
        assert_relative_eq!(slow[13], n as f64 * a * a / 4.0, max_relative = 1e-10);
        assert_relative_eq!(fast[13], n as f64 * a * a / 4.0, max_relative = 1e-10);
    }

    #[test]
    fn parseval_on_random_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [2usize, 3, 17, 256, 1000] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let total: f64 = periodogram(&x, 1.0).unwrap().bin_values.iter().sum();
            assert_relative_eq!(total, energy, max_relative = 1e-9);
        }
    }

    #[test]
    fn periodogram_rejects_short_input() {
        assert!(periodogram(&[], 1.0).is_err());
        assert!(periodogram(&[1.0], 1.0).is_err());
    }

    #[test]
    fn extract_on_bin_tone_db() {
        let (n, fs) = (2000usize, 4e6);
        let a = 0.02;
        let x = tone(n, 400, a);
        let psd = periodogram(&x, fs).unwrap();
        let rss = extract_rss(&psd, &[800e3], DEFAULT_DB_FLOOR).unwrap();
        let expected = 10.0 * (dft_power(&x)[400]).log10();
        assert_relative_eq!(rss.values[0], expected, max_relative = 1e-10);
        assert_relative_eq!(rss.values[0], 10.0 * (n as f64 * a * a / 4.0).log10(), max_relative = 1e-10);
    }

    #[test]
    fn doubling_n_adds_three_db() {
        let fs = 4e6;
        let a = 0.02;
        let r = |n: usize| {
            let x = tone(n, n / 5, a);
            extract_rss(&periodogram(&x, fs).unwrap(), &[800e3], DEFAULT_DB_FLOOR).unwrap().values[0]
        };
        assert!((r(4000) - r(2000) - 10.0 * 2f64.log10()).abs() < 1e-6);
    }

    #[test]
    fn zero_signal_hits_floor() {
        let psd = periodogram(&vec![0.0; 100], 100.0).unwrap();
        let rss = extract_rss(&psd, &[10.0, 20.0], -300.0).unwrap();
        assert_eq!(rss.values, vec![-300.0, -300.0]);
    }

    #[test]
    fn tone_above_nyquist_is_rejected() {
        let psd = periodogram(&vec![1.0; 100], 100.0).unwrap();
        assert!(matches!(extract_rss(&psd, &[60.0], -300.0), Err(Error::Domain(_))));
    }

    #[test]
    fn off_bin_tone_is_found_by_neighbour_search() {
        let n = 256;
        let fs = 256.0;
        // tone at 40.4 Hz, nominal bin 40, leakage peaks at 40
        let x: Vec<f64> = (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * 40.4 * t as f64 / fs).cos())
            .collect();
        let psd = periodogram(&x, fs).unwrap();
        let rss = extract_rss(&psd, &[40.4], -300.0).unwrap();
        let best = psd.bin_values[39..=41].iter().copied().fold(0.0, f64::max);
        assert_eq!(rss.values[0], 10.0 * best.log10());
    }

    #[test]
    fn benchmark_tones_are_on_bin() {
        let tones = [800e3, 850e3, 900e3, 950e3];
        for n in [2000, 4000, 6000, 8000] {
            assert!(tones_on_bin(&tones, n, 4e6).iter().all(|&b| b));
        }
        assert!(!tones_on_bin(&[800e3], 2048, 4e6)[0]);
    }

    #[test]
    fn build_single_block_and_identical_blocks() {
        let fs = 1000.0;
        let n = 100;
        let tones = [100.0, 200.0];
        let stream = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|t| {
                    let t = t as f64 / fs;
                    1.0 + (2.0 * std::f64::consts::PI * 100.0 * t).cos()
                        + 0.5 * (2.0 * std::f64::consts::PI * 200.0 * t).cos()
                })
                .collect()
        };
        let grid = vec![Point2::new(0.0, 0.0), Point2::new(1.0, 0.0)];
        let db = build_fingerprints(&grid, &[stream(n), stream(n + 7)], n, fs, &tones, -300.0).unwrap();
        assert_eq!((db.g(), db.q(), db.m()), (2, 1, 2));

        let db = build_fingerprints(&grid, &[stream(5 * n), stream(5 * n)], n, fs, &tones, -300.0).unwrap();
        assert_eq!(db.q(), 5);
        for set in &db.samples {
            for v in set {
                for (a, b) in v.iter().zip(&set[0]) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
        assert!(build_fingerprints(&grid, &[stream(50), stream(50)], n, fs, &tones, -300.0).is_err());
    }

    #[test]
    fn mean_fingerprints_matches_column_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|_| (0..4).map(|_| (0..3).map(|_| rng.random_range(-60.0..-20.0)).collect()).collect())
            .collect();
        let db = FingerprintDb::new(
            vec![Point2::default(); 3],
            samples.clone(),
            vec![1.0, 2.0, 3.0],
            DbMeta {
                fft_len: 8,
                sample_rate: 8.0,
            },
        )
        .unwrap();
        let means = mean_fingerprints(&db);
        for g in 0..3 {
            for m in 0..3 {
                let s: f64 = samples[g].iter().map(|block| block[m]).sum();
                assert_relative_eq!(means[g][m], s / 4.0, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn text_format_round_trip() {
        let db = FingerprintDb::new(
            vec![Point2::new(0.0, 0.05), Point2::new(0.1, 0.0)],
            vec![
                vec![vec![-27.334012345678, -32.8], vec![-27.1, -32.9]],
                vec![vec![-20.0, 1.0 / 3.0], vec![-300.0, -1e-5]],
            ],
            vec![800e3, 850e3],
            DbMeta {
                fft_len: 2000,
                sample_rate: 4e6,
            },
        )
        .unwrap();
        let text = db.to_text();
        assert!(text.lines().nth(1).unwrap() == "2 2 2 2000 4000000");
        let back = FingerprintDb::from_text(&text).unwrap();
        assert_eq!(back, db.quantized());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn text_format_errors() {
        assert!(FingerprintDb::from_text("").is_err());
        assert!(FingerprintDb::from_text("1 1 1 8\n").is_err());
        let err = FingerprintDb::from_text("1 1 2 8 8\n1 2\n0 0\n1.0 x\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }));
        assert!(FingerprintDb::from_text("1 1 1 8 8\n1\n0 0\n1\n5 5\n").is_err());
    }
}
