//! File formats: checkpoints, dataset files, CSV reports, SVG line plots.
//!
//! Binary formats are little-endian with 64-bit floats.
//!
//! Checkpoint (`INNCKPT1`):
//!
//! ```text
//! magic "INNCKPT1" | kind u8 (0 base, 1 interval, 2 probout) | input_dim u64
//! layer_count u32 | layer records
//!     0 dense   inputs u64 outputs u64
//!     1 conv1d  in_ch u64 out_ch u64 kernel u64 len u64
//!     2 relu
//!     3 dropout p f64
//! point parameters, per affine layer: weight, bias
//! kind 1 only: trainable flag u8 per affine layer, then per affine layer
//!     lower.weight, lower.bias, upper.weight, upper.bias
//! metadata: seed u64, epochs u64, lr f64, beta f64
//! ```
//!
//! Dataset (`INND1`):
//!
//! ```text
//! magic "INND1" | version u32 | n u64 | m u64 | sigma f64 | seed u64 | gamma f64
//! x block (m * n f64, row-major) | y block (m * n f64, row-major)
//! ```

use std::fs;
use std::path::Path;

use crate::baselines::ProbOutNetwork;
use crate::data::Samples;
use crate::deconv::{DeconvDataset, OperatorSpec, Splits};
use crate::error::{Error, Result};
use crate::interval::{IntervalNetwork, IntervalParam};
use crate::linear::Geometry;
use crate::nn::{LayerParams, LayerSpec, Network};
use crate::tensor::Tensor;

const CKPT_MAGIC: &[u8; 8] = b"INNCKPT1";
const DATA_MAGIC: &[u8; 5] = b"INND1";
const DATA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Base(Network),
    Interval(IntervalNetwork),
    ProbOut(ProbOutNetwork),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: u64,
    pub lr: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub meta: TrainingMeta,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn floats(&mut self, v: &[f64]) {
        for x in v {
            self.f64(*x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Corrupt(format!(
                "truncated at byte {} (wanted {n} more, {} left)",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Corrupt("size overflows usize".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("size overflow".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Corrupt(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn write_layers(w: &mut Writer, net: &Network) {
    w.u64(net.input_dim() as u64);
    w.u32(net.layers().len() as u32);
    for layer in net.layers() {
        match *layer {
            LayerSpec::Dense { inputs, outputs } => {
                w.u8(0);
                w.u64(inputs as u64);
                w.u64(outputs as u64);
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                len,
            } => {
                w.u8(1);
                for v in [in_channels, out_channels, kernel, len] {
                    w.u64(v as u64);
                }
            }
            LayerSpec::Relu => w.u8(2),
            LayerSpec::Dropout { p } => {
                w.u8(3);
                w.f64(p);
            }
        }
    }
    for p in net.params() {
        w.floats(p.weight.data());
        w.floats(p.bias.data());
    }
}

fn read_layer_params(r: &mut Reader, g: &Geometry) -> Result<LayerParams> {
    let weight = Tensor::new(vec![g.out_ch, g.in_ch, g.kernel], r.floats(g.weight_len())?)?;
    let bias = Tensor::new(vec![g.out_ch], r.floats(g.out_ch)?)?;
    Ok(LayerParams { weight, bias })
}

fn read_params(r: &mut Reader, layers: &[LayerSpec]) -> Result<Vec<LayerParams>> {
    layers
        .iter()
        .filter_map(LayerSpec::geometry)
        .map(|g| read_layer_params(r, &g))
        .collect()
}

fn read_network(r: &mut Reader) -> Result<Network> {
    let input_dim = r.usize()?;
    let count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        layers.push(match r.u8()? {
            0 => LayerSpec::Dense {
                inputs: r.usize()?,
                outputs: r.usize()?,
            },
            1 => LayerSpec::Conv1d {
                in_channels: r.usize()?,
                out_channels: r.usize()?,
                kernel: r.usize()?,
                len: r.usize()?,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::Dropout { p: r.f64()? },
            t => return Err(Error::Corrupt(format!("unknown layer tag {t}"))),
        });
    }
    let params = read_params(r, &layers)?;
    Network::new(input_dim, layers, params)
        .map_err(|e| Error::Corrupt(format!("inconsistent architecture: {e}")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(CKPT_MAGIC);
        match &self.model {
            Model::Base(net) => {
                w.u8(0);
                write_layers(&mut w, net);
            }
            Model::Interval(inn) => {
                w.u8(1);
                write_layers(&mut w, inn.base());
                for &t in inn.trainable() {
                    w.u8(t as u8);
                }
                for b in inn.bounds() {
                    for s in b.slices() {
                        w.floats(s);
                    }
                }
            }
            Model::ProbOut(po) => {
                w.u8(2);
                write_layers(&mut w, po.network());
            }
        }
        let m = self.meta;
        w.u64(m.seed);
        w.u64(m.epochs);
        w.f64(m.lr);
        w.f64(m.beta);
        w.0
    }

    /// Parses and validates a checkpoint; interval checkpoints must satisfy
    /// the containment invariant.
    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != CKPT_MAGIC {
            return Err(Error::Corrupt("bad checkpoint magic".into()));
        }
        let kind = r.u8()?;
        let model = match kind {
            0 => Model::Base(read_network(&mut r)?),
            1 => {
                let base = read_network(&mut r)?;
                let mut trainable = Vec::with_capacity(base.num_param_layers());
                for _ in 0..base.num_param_layers() {
                    trainable.push(match r.u8()? {
                        0 => false,
                        1 => true,
                        f => return Err(Error::Corrupt(format!("bad trainable flag {f}"))),
                    });
                }
                let mut bounds = Vec::with_capacity(base.num_param_layers());
                for g in base.layers().iter().filter_map(LayerSpec::geometry) {
                    let lower = read_layer_params(&mut r, &g)?;
                    let upper = read_layer_params(&mut r, &g)?;
                    bounds.push(IntervalParam { lower, upper });
                }
                Model::Interval(IntervalNetwork::from_parts(base, bounds, trainable)?)
            }
            2 => Model::ProbOut(ProbOutNetwork::from_network(read_network(&mut r)?)?),
            k => return Err(Error::Corrupt(format!("unknown checkpoint kind {k}"))),
        };
        let meta = TrainingMeta {
            seed: r.u64()?,
            epochs: r.u64()?,
            lr: r.f64()?,
            beta: r.f64()?,
        };
        r.finish()?;
        Ok(Self { model, meta })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub fn dataset_to_bytes(ds: &DeconvDataset) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(DATA_MAGIC);
    w.u32(DATA_VERSION);
    w.u64(ds.n() as u64);
    w.u64(ds.m() as u64);
    w.f64(ds.sigma);
    w.u64(ds.seed);
    w.f64(ds.operator.gamma);
    w.floats(ds.samples.inputs.data());
    w.floats(ds.samples.targets.data());
    w.0
}

pub fn dataset_from_bytes(buf: &[u8]) -> Result<DeconvDataset> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(5)? != DATA_MAGIC {
        return Err(Error::Corrupt("bad dataset magic".into()));
    }
    let version = r.u32()?;
    if version != DATA_VERSION {
        return Err(Error::Corrupt(format!("unsupported dataset version {version}")));
    }
    let n = r.usize()?;
    let m = r.usize()?;
    let sigma = r.f64()?;
    let seed = r.u64()?;
    let gamma = r.f64()?;
    if n == 0 || m == 0 {
        return Err(Error::Corrupt(format!("empty dataset header n={n} m={m}")));
    }
    let len = n
        .checked_mul(m)
        .ok_or_else(|| Error::Corrupt("size overflow".into()))?;
    let x = Tensor::new(vec![m, n], r.floats(len)?)?;
    let y = Tensor::new(vec![m, n], r.floats(len)?)?;
    r.finish()?;
    Ok(DeconvDataset {
        operator: OperatorSpec { n, gamma },
        sigma,
        seed,
        samples: Samples::new(x, y)?,
        splits: Splits::for_count(m),
    })
}

pub fn save_dataset(path: &Path, ds: &DeconvDataset) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds)).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<DeconvDataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    dataset_from_bytes(&bytes)
}

/// A CSV cell: numbers are written with 17 significant digits so they
/// parse back to the same `f64`.
#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Num(f64),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(if v { "true" } else { "false" }.to_string())
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Missing => String::new(),
        }
    }
}

/// A CSV table: header plus rows of equal width.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width must match header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding: {e}"));
        w.write_record(&self.header).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(err)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv encoding: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<()> {
    fs::write(path, table.to_csv()?).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl LinePlot {
    /// Minimal SVG: frame, tick labels at the data extremes, one polyline
    /// per series, legend on the right.
    pub fn to_svg(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for &(x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if x0 > x1 {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        s.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
             viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        ));
        s.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
             <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
            LEFT + pw / 2.0,
            esc(&self.title)
        ));
        // axes
        s.push_str(&format!(
            "<line x1=\"{LEFT}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
             <line x1=\"{LEFT}\" y1=\"{TOP}\" x2=\"{LEFT}\" y2=\"{b}\" stroke=\"black\"/>\n",
            b = TOP + ph,
            r = LEFT + pw
        ));
        for (v, x) in [(x0, sx(x0)), (x1, sx(x1))] {
            s.push_str(&format!(
                "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
                TOP + ph + 16.0,
                tick(v)
            ));
        }
        for (v, y) in [(y0, sy(y0)), (y1, sy(y1))] {
            s.push_str(&format!(
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
                LEFT - 6.0,
                y + 4.0,
                tick(v)
            ));
        }
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>\n",
            LEFT + pw / 2.0,
            H - 10.0,
            esc(&self.x_label)
        ));
        s.push_str(&format!(
            "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>\n",
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        ));
        for (i, series) in self.series.iter().enumerate() {
            let coords: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            if !coords.is_empty() {
                s.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                    esc(&series.color),
                    coords.join(" ")
                ));
            }
            let ly = TOP + 14.0 + 18.0 * i as f64;
            let lx = LEFT + pw + 12.0;
            s.push_str(&format!(
                "<line x1=\"{lx:.2}\" y1=\"{ly:.2}\" x2=\"{:.2}\" y2=\"{ly:.2}\" stroke=\"{}\" stroke-width=\"2\"/>\n\
                 <text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
                lx + 20.0,
                esc(&series.color),
                lx + 26.0,
                ly + 4.0,
                esc(&series.name)
            ));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-2 || v.abs() >= 1e4) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

pub fn emit_svg_lineplot(plot: &LinePlot, path: &Path) -> Result<()> {
    fs::write(path, plot.to_svg()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deconv::{generate, NoiseMode, SignalSpec};
    use crate::interval::LayerMask;
    use crate::rng::stream_rng;

    fn small_inn() -> IntervalNetwork {
        let mut rng = stream_rng(1, 0);
        let base = Network::init(
            8,
            vec![
                LayerSpec::Conv1d { in_channels: 1, out_channels: 2, kernel: 3, len: 8 },
                LayerSpec::Relu,
                LayerSpec::Dropout { p: 0.25 },
                LayerSpec::Conv1d { in_channels: 2, out_channels: 1, kernel: 3, len: 8 },
            ],
            &mut rng,
        )
        .unwrap();
        let mut inn = IntervalNetwork::from_base(base, &LayerMask::Last(1)).unwrap();
        // widen the trainable layer through the public projection path
        let widened: Vec<IntervalParam> = inn
            .bounds()
            .iter()
            .zip(inn.trainable())
            .map(|(b, &t)| {
                let mut b = b.clone();
                if t {
                    for v in b.lower.weight.data_mut() {
                        *v -= 0.1;
                    }
                    for v in b.upper.bias.data_mut() {
                        *v += 0.2;
                    }
                }
                b
            })
            .collect();
        inn = IntervalNetwork::from_parts(inn.base().clone(), widened, inn.trainable().to_vec())
            .unwrap();
        inn
    }

    fn meta() -> TrainingMeta {
        TrainingMeta { seed: 3, epochs: 7, lr: 1e-3, beta: 2e-3 }
    }

    #[test]
    fn checkpoint_bytes_are_stable() {
        let ckpt = Checkpoint { model: Model::Interval(small_inn()), meta: meta() };
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncated_or_mangled_checkpoints_are_rejected() {
        let bytes = Checkpoint { model: Model::Interval(small_inn()), meta: meta() }.to_bytes();
        for cut in [0, 5, 9, 30, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::Corrupt(_))));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(Error::Corrupt(_))));
    }

    #[test]
    fn containment_is_revalidated_on_load() {
        let inn = small_inn();
        let mut bytes = Checkpoint { model: Model::Interval(inn.clone()), meta: meta() }.to_bytes();
        // the last affine layer's upper bias sits just before the 32-byte metadata
        let at = bytes.len() - 32 - 8;
        let point_bias = inn.base().params()[1].bias.data()[0];
        bytes[at..at + 8].copy_from_slice(&(point_bias - 1.0).to_le_bytes());
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Containment(_))));
    }

    #[test]
    fn dataset_round_trip() {
        let op = OperatorSpec { n: 16, gamma: 4.0 };
        let sig = SignalSpec { n: 16, jumps: (1, 3), values: (0.0, 1.0) };
        let ds = generate(&op, &sig, 12, 0.01, NoiseMode::Inputs, 5).unwrap();
        let bytes = dataset_to_bytes(&ds);
        assert_eq!(&bytes[..5], b"INND1");
        assert_eq!(bytes.len(), 5 + 4 + 8 * 5 + 2 * 12 * 16 * 8);
        let back = dataset_from_bytes(&bytes).unwrap();
        assert_eq!(back, ds);
        assert!(matches!(dataset_from_bytes(&bytes[..100]), Err(Error::Corrupt(_))));
    }

    #[test]
    fn csv_numbers_round_trip_exactly() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE];
        let mut t = Table::new(&["name", "value", "maybe"]);
        for (i, v) in vals.iter().enumerate() {
            t.push(vec![Cell::from(format!("r{i}").as_str()), (*v).into(), None.into()]);
        }
        let text = t.to_csv().unwrap();
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        for (rec, v) in rd.records().zip(vals) {
            let rec = rec.unwrap();
            assert_eq!(rec[1].parse::<f64>().unwrap().to_bits(), v.to_bits());
            assert_eq!(&rec[2], "");
        }
    }

    #[test]
    fn empty_plot_is_valid_svg_with_axes() {
        let plot = LinePlot {
            title: "empty".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![],
        };
        let svg = plot.to_svg();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<line").count(), 2);
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn io_errors_carry_the_path() {
        let err = load_checkpoint(Path::new("/nonexistent/dir/model.ckpt")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/model.ckpt"));
    }
}
