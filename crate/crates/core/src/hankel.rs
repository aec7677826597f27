//! Signal records, block-Hankel matrices and the data stack
//! `H = [Uf; Up; Yp; Yf]`, plus the sliding update column used online.

use std::collections::VecDeque;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Error, Result};

/// Time-indexed input/output samples. Column `i` of `inputs` and `outputs`
/// is the sample at time `i`; outputs equal states since `C = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    inputs: DMatrix<f64>,
    outputs: DMatrix<f64>,
}

impl SignalRecord {
    pub fn new(inputs: DMatrix<f64>, outputs: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() != outputs.ncols() {
            return Err(dim_err(format!(
                "inputs have {} samples but outputs have {}",
                inputs.ncols(),
                outputs.ncols()
            )));
        }
        if !inputs.iter().chain(outputs.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("signal record"));
        }
        Ok(Self { inputs, outputs })
    }

    pub fn from_samples(inputs: &[DVector<f64>], outputs: &[DVector<f64>]) -> Result<Self> {
        if inputs.is_empty() || outputs.is_empty() {
            return Err(Error::RecordTooShort { len: 0, min: 1 });
        }
        Self::new(DMatrix::from_columns(inputs), DMatrix::from_columns(outputs))
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.outputs.nrows()
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn outputs(&self) -> &DMatrix<f64> {
        &self.outputs
    }

    pub fn input(&self, i: usize) -> DVector<f64> {
        self.inputs.column(i).into_owned()
    }

    pub fn output(&self, i: usize) -> DVector<f64> {
        self.outputs.column(i).into_owned()
    }

    /// Parse CSV with header `u1,...,um,y1,...,yn`, one sample per line.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let m = headers.iter().filter(|h| h.trim().starts_with('u')).count();
        let n = headers.iter().filter(|h| h.trim().starts_with('y')).count();
        if m == 0 || n == 0 || m + n != headers.len() {
            return Err(Error::Config(format!(
                "expected header u1..um,y1..yn, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut data = Vec::new();
        for row in rdr.records() {
            let row = row?;
            for field in row.iter() {
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::Config(format!("non-numeric field {field:?} in record"))
                })?;
                data.push(value);
            }
        }
        let len = data.len() / (m + n);
        let all = DMatrix::from_column_slice(m + n, len, &data);
        Self::new(all.rows(0, m).into_owned(), all.rows(m, n).into_owned())
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.input_dim())
            .map(|i| format!("u{i}"))
            .chain((1..=self.output_dim()).map(|i| format!("y{i}")))
            .collect();
        wtr.write_record(&header)?;
        for t in 0..self.len() {
            let row: Vec<String> = self
                .inputs
                .column(t)
                .iter()
                .chain(self.outputs.column(t).iter())
                .map(|v| format!("{v:e}"))
                .collect();
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

/// Block-Hankel matrix whose `(j, c)` block is `signal[:, start + j + c]`.
pub fn build_hankel(
    signal: &DMatrix<f64>,
    start: usize,
    depth: usize,
    width: usize,
) -> Result<DMatrix<f64>> {
    if depth == 0 || width == 0 {
        return Err(dim_err("Hankel depth and width must be positive"));
    }
    let len = signal.ncols();
    let needed = start + depth + width - 2;
    if needed >= len {
        return Err(Error::OutOfRange { needed, len });
    }
    let dim = signal.nrows();
    let mut out = DMatrix::zeros(depth * dim, width);
    for c in 0..width {
        for j in 0..depth {
            out.view_mut((j * dim, c), (dim, 1))
                .copy_from(&signal.column(start + j + c));
        }
    }
    Ok(out)
}

/// Row bookkeeping of the stack `[Uf; Up; Yp; Yf]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackLayout {
    /// Block depth `k = k_p + 1`.
    pub k: usize,
    /// Input dimension.
    pub m: usize,
    /// Output (state) dimension.
    pub n: usize,
}

impl StackLayout {
    pub fn new(k: usize, m: usize, n: usize) -> Self {
        Self { k, m, n }
    }

    /// Stack height `s = 2k(m+n)`.
    pub fn s(&self) -> usize {
        2 * self.k * (self.m + self.n)
    }

    pub fn uf_rows(&self) -> Range<usize> {
        0..self.k * self.m
    }

    pub fn up_rows(&self) -> Range<usize> {
        let a = self.k * self.m;
        a..2 * a
    }

    pub fn yp_rows(&self) -> Range<usize> {
        let a = 2 * self.k * self.m;
        a..a + self.k * self.n
    }

    pub fn yf_rows(&self) -> Range<usize> {
        let a = 2 * self.k * self.m + self.k * self.n;
        a..a + self.k * self.n
    }

    /// Past data `Wp = [Up; Yp]`, the middle `k(m+n)` rows.
    pub fn wp_rows(&self) -> Range<usize> {
        self.up_rows().start..self.yp_rows().end
    }

    /// Prediction horizon `k_p = k - 1`.
    pub fn horizon(&self) -> usize {
        self.k - 1
    }

    /// Column of the stack for a window of `2k` consecutive samples.
    fn column_from_window<'a>(
        &self,
        inputs: impl Iterator<Item = &'a DVector<f64>> + Clone,
        outputs: impl Iterator<Item = &'a DVector<f64>> + Clone,
    ) -> DVector<f64> {
        let (k, m, n) = (self.k, self.m, self.n);
        let mut h = DVector::zeros(self.s());
        let uf0 = self.uf_rows().start;
        let up0 = self.up_rows().start;
        let yp0 = self.yp_rows().start;
        let yf0 = self.yf_rows().start;
        for (i, u) in inputs.enumerate() {
            let at = if i < k { up0 + i * m } else { uf0 + (i - k) * m };
            h.rows_mut(at, m).copy_from(u);
        }
        for (i, y) in outputs.enumerate() {
            let at = if i < k { yp0 + i * n } else { yf0 + (i - k) * n };
            h.rows_mut(at, n).copy_from(y);
        }
        h
    }
}

/// The four Hankel blocks of a record.
#[derive(Debug, Clone)]
pub struct HankelStack {
    pub uf: DMatrix<f64>,
    pub up: DMatrix<f64>,
    pub yp: DMatrix<f64>,
    pub yf: DMatrix<f64>,
    pub layout: StackLayout,
}

impl HankelStack {
    /// Column count `N`.
    pub fn width(&self) -> usize {
        self.uf.ncols()
    }

    pub fn s(&self) -> usize {
        self.layout.s()
    }

    /// `H = [Uf; Up; Yp; Yf]`.
    pub fn stacked(&self) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.s(), self.width());
        let l = &self.layout;
        h.rows_mut(l.uf_rows().start, l.uf_rows().len()).copy_from(&self.uf);
        h.rows_mut(l.up_rows().start, l.up_rows().len()).copy_from(&self.up);
        h.rows_mut(l.yp_rows().start, l.yp_rows().len()).copy_from(&self.yp);
        h.rows_mut(l.yf_rows().start, l.yf_rows().len()).copy_from(&self.yf);
        h
    }

    /// `Wp = [Up; Yp]`.
    pub fn wp(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.up.nrows() + self.yp.nrows(), self.width());
        w.rows_mut(0, self.up.nrows()).copy_from(&self.up);
        w.rows_mut(self.up.nrows(), self.yp.nrows()).copy_from(&self.yp);
        w
    }

    pub fn column(&self, c: usize) -> DVector<f64> {
        let mut h = DVector::zeros(self.s());
        let l = &self.layout;
        h.rows_mut(l.uf_rows().start, l.uf_rows().len()).copy_from(&self.uf.column(c));
        h.rows_mut(l.up_rows().start, l.up_rows().len()).copy_from(&self.up.column(c));
        h.rows_mut(l.yp_rows().start, l.yp_rows().len()).copy_from(&self.yp.column(c));
        h.rows_mut(l.yf_rows().start, l.yf_rows().len()).copy_from(&self.yf.column(c));
        h
    }
}

/// Build the data stack of a record with block depth `k`.
///
/// Uses `N = N_t - 2k + 1` columns so the last future block ends exactly at
/// the final sample.
pub fn assemble_stack(record: &SignalRecord, k: usize) -> Result<HankelStack> {
    if k == 0 {
        return Err(dim_err("block depth must be positive"));
    }
    let len = record.len();
    let min = 2 * k + 1;
    if len < min {
        return Err(Error::RecordTooShort { len, min });
    }
    let width = len - 2 * k + 1;
    Ok(HankelStack {
        up: build_hankel(record.inputs(), 0, k, width)?,
        uf: build_hankel(record.inputs(), k, k, width)?,
        yp: build_hankel(record.outputs(), 0, k, width)?,
        yf: build_hankel(record.outputs(), k, k, width)?,
        layout: StackLayout::new(k, record.input_dim(), record.output_dim()),
    })
}

/// Sliding `2k`-sample window over the concatenation of the historical record
/// and the online samples; emits the stack column of the newest window.
#[derive(Debug, Clone)]
pub struct UpdateColumnBuilder {
    layout: StackLayout,
    inputs: VecDeque<DVector<f64>>,
    outputs: VecDeque<DVector<f64>>,
    step: usize,
}

impl UpdateColumnBuilder {
    /// An empty builder; [`next_column`](Self::next_column) fails until it is
    /// initialized.
    pub fn new(layout: StackLayout) -> Self {
        Self {
            layout,
            inputs: VecDeque::new(),
            outputs: VecDeque::new(),
            step: 0,
        }
    }

    /// Initialize from the last `2k` samples of a historical record, i.e. the
    /// last column `h_{-1}` of its stack.
    pub fn from_record(record: &SignalRecord, k: usize) -> Result<Self> {
        let layout = StackLayout::new(k, record.input_dim(), record.output_dim());
        let len = record.len();
        if len < 2 * k {
            return Err(Error::RecordTooShort { len, min: 2 * k });
        }
        let mut b = Self::new(layout);
        for i in (len - 2 * k)..len {
            b.inputs.push_back(record.input(i));
            b.outputs.push_back(record.output(i));
        }
        Ok(b)
    }

    /// Initialize from a stack column `h_{-1}`.
    pub fn initialize(&mut self, column: &DVector<f64>) -> Result<()> {
        let l = self.layout;
        if column.len() != l.s() {
            return Err(dim_err(format!(
                "stack column has length {}, expected {}",
                column.len(),
                l.s()
            )));
        }
        self.inputs.clear();
        self.outputs.clear();
        for i in 0..2 * l.k {
            let (u_at, y_at) = if i < l.k {
                (l.up_rows().start + i * l.m, l.yp_rows().start + i * l.n)
            } else {
                (
                    l.uf_rows().start + (i - l.k) * l.m,
                    l.yf_rows().start + (i - l.k) * l.n,
                )
            };
            self.inputs.push_back(column.rows(u_at, l.m).into_owned());
            self.outputs.push_back(column.rows(y_at, l.n).into_owned());
        }
        self.step = 0;
        Ok(())
    }

    pub fn layout(&self) -> StackLayout {
        self.layout
    }

    pub fn is_initialized(&self) -> bool {
        self.inputs.len() == 2 * self.layout.k
    }

    /// Number of online samples appended so far.
    pub fn step(&self) -> usize {
        self.step
    }

    /// How many samples of the current window came from the online stream.
    pub fn online_samples_in_window(&self) -> usize {
        self.step.min(2 * self.layout.k)
    }

    /// Column of the current window (`h_{-1}` right after initialization).
    pub fn current_column(&self) -> Result<DVector<f64>> {
        if !self.is_initialized() {
            return Err(Error::Uninitialized);
        }
        Ok(self
            .layout
            .column_from_window(self.inputs.iter(), self.outputs.iter()))
    }

    /// Shift the window by one sample, append `(input, output)` as the newest
    /// sample and return the resulting column `h_t`.
    pub fn next_column(
        &mut self,
        input: &DVector<f64>,
        output: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        if !self.is_initialized() {
            return Err(Error::Uninitialized);
        }
        if input.len() != self.layout.m || output.len() != self.layout.n {
            return Err(dim_err(format!(
                "online sample has dims ({}, {}), expected ({}, {})",
                input.len(),
                output.len(),
                self.layout.m,
                self.layout.n
            )));
        }
        if !input.iter().chain(output.iter()).all(|x| x.is_finite()) {
            return Err(Error::NonFinite("online sample"));
        }
        self.inputs.pop_front();
        self.outputs.pop_front();
        self.inputs.push_back(input.clone());
        self.outputs.push_back(output.clone());
        self.step += 1;
        self.current_column()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_signal(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, values.len(), values)
    }

    fn ramp_record(len: usize, m: usize, n: usize) -> SignalRecord {
        let u = DMatrix::from_fn(m, len, |r, c| (c * 10 + r) as f64);
        let y = DMatrix::from_fn(n, len, |r, c| -((c * 10 + r) as f64) - 0.5);
        SignalRecord::new(u, y).unwrap()
    }

    #[test]
    fn hankel_definitional_examples() {
        let s = scalar_signal(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let h = build_hankel(&s, 0, 2, 3).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 3.0, 4.0]));
        let h = build_hankel(&s, 2, 2, 2).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 4.0, 5.0]));
        match build_hankel(&s, 2, 3, 2) {
            Err(Error::OutOfRange { needed, len }) => {
                assert_eq!(needed, 5);
                assert_eq!(len, 5);
            }
            other => panic!("expected out-of-range, got {other:?}"),
        }
    }

    #[test]
    fn stack_dimensions() {
        let rec = ramp_record(11, 1, 2);
        let st = assemble_stack(&rec, 3).unwrap();
        assert_eq!(st.width(), 6);
        assert_eq!(st.s(), 18);
        assert_eq!(st.stacked().shape(), (18, 6));

        let rec = ramp_record(100_000, 1, 2);
        let st = assemble_stack(&rec, 5).unwrap();
        assert_eq!(st.width(), 99_991);
        assert_eq!(st.s(), 30);

        let rec = ramp_record(6, 1, 2);
        assert!(matches!(
            assemble_stack(&rec, 3),
            Err(Error::RecordTooShort { len: 6, min: 7 })
        ));
    }

    #[test]
    fn stack_row_order() {
        let rec = ramp_record(20, 1, 1);
        let st = assemble_stack(&rec, 2).unwrap();
        let h = st.stacked();
        let l = st.layout;
        // column 0: Uf starts at sample k, Up at 0, Yp at 0, Yf at k
        assert_eq!(h[(l.uf_rows().start, 0)], 20.0);
        assert_eq!(h[(l.up_rows().start, 0)], 0.0);
        assert_eq!(h[(l.yp_rows().start, 0)], -0.5);
        assert_eq!(h[(l.yf_rows().start, 0)], -20.5);
        assert_eq!(l.wp_rows(), 2..6);
    }

    #[test]
    fn builder_reproduces_last_column() {
        let rec = ramp_record(40, 2, 3);
        let st = assemble_stack(&rec, 4).unwrap();
        let b = UpdateColumnBuilder::from_record(&rec, 4).unwrap();
        let last = st.column(st.width() - 1);
        assert_eq!(b.current_column().unwrap(), last);

        let mut b2 = UpdateColumnBuilder::new(st.layout);
        b2.initialize(&last).unwrap();
        assert_eq!(b2.current_column().unwrap(), last);
    }

    #[test]
    fn builder_requires_initialization() {
        let mut b = UpdateColumnBuilder::new(StackLayout::new(2, 1, 1));
        let x = DVector::from_element(1, 1.0);
        assert!(matches!(b.next_column(&x, &x), Err(Error::Uninitialized)));
    }

    #[test]
    fn first_online_column_places_sample_last() {
        let k = 3;
        let rec = ramp_record(30, 1, 2);
        let mut b = UpdateColumnBuilder::from_record(&rec, k).unwrap();
        let h_prev = b.current_column().unwrap();
        let u0 = DVector::from_element(1, 777.0);
        let y0 = DVector::from_vec(vec![888.0, 999.0]);
        let h0 = b.next_column(&u0, &y0).unwrap();
        let l = b.layout();
        // newest sample is the bottom of the future blocks
        assert_eq!(h0[l.uf_rows().end - 1], 777.0);
        assert_eq!(h0.rows(l.yf_rows().end - 2, 2).into_owned(), y0);
        // everything else is historical: the previous window shifted by one
        for j in 0..k - 1 {
            assert_eq!(h0[l.uf_rows().start + j], h_prev[l.uf_rows().start + j + 1]);
            assert_eq!(h0[l.up_rows().start + j], h_prev[l.up_rows().start + j + 1]);
        }
        assert_eq!(h0[l.up_rows().end - 1], h_prev[l.uf_rows().start]);
        assert_eq!(b.online_samples_in_window(), 1);
    }

    #[test]
    fn future_inputs_become_online_after_k_steps() {
        let k = 4;
        let rec = ramp_record(30, 1, 1);
        let mut b = UpdateColumnBuilder::from_record(&rec, k).unwrap();
        let mut h = DVector::zeros(0);
        for t in 0..k {
            let v = DVector::from_element(1, 1000.0 + t as f64);
            h = b.next_column(&v, &v).unwrap();
        }
        let l = b.layout();
        let uf: Vec<f64> = h.rows(l.uf_rows().start, k).iter().cloned().collect();
        assert_eq!(uf, vec![1000.0, 1001.0, 1002.0, 1003.0]);
        let up_hist = h.rows(l.up_rows().start, k).iter().all(|&x| x < 1000.0);
        assert!(up_hist);
    }

    #[test]
    fn csv_round_trip() {
        let rec = ramp_record(7, 1, 2);
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("u1,y1,y2\n"));
        let back = SignalRecord::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn mismatched_lengths_rejected() {
        let u = DMatrix::zeros(1, 5);
        let y = DMatrix::zeros(2, 4);
        assert!(SignalRecord::new(u, y).is_err());
    }

    proptest! {
        #[test]
        fn hankel_structure_probe(len in 12usize..40, k in 1usize..5, m in 1usize..3, n in 1usize..3,
                                  probe in 0usize..1000) {
            prop_assume!(len >= 2 * k + 1);
            let rec = ramp_record(len, m, n);
            let st = assemble_stack(&rec, k).unwrap();
            let c = probe % st.width();
            let j = (probe / 7) % k;
            let r = probe % m;
            prop_assert_eq!(st.uf[(j * m + r, c)], rec.inputs()[(r, k + j + c)]);
            prop_assert_eq!(st.up[(j * m + r, c)], rec.inputs()[(r, j + c)]);
            let ry = probe % n;
            prop_assert_eq!(st.yp[(j * n + ry, c)], rec.outputs()[(ry, j + c)]);
            prop_assert_eq!(st.yf[(j * n + ry, c)], rec.outputs()[(ry, k + j + c)]);
        }

        #[test]
        fn consecutive_columns_overlap(k in 1usize..5, steps in 1usize..12) {
            let rec = ramp_record(30, 1, 2);
            let mut b = UpdateColumnBuilder::from_record(&rec, k).unwrap();
            let mut prev = b.current_column().unwrap();
            for t in 0..steps {
                let u = DVector::from_element(1, 5000.0 + t as f64);
                let y = DVector::from_vec(vec![6000.0 + t as f64, 7000.0 + t as f64]);
                let next = b.next_column(&u, &y).unwrap();
                let l = b.layout();
                // window shifted by one sample: past blocks drop their oldest
                // sample and take the oldest future sample
                for (rows, dim) in [(l.up_rows(), 1), (l.yp_rows(), 2)] {
                    let block = rows.len();
                    prop_assert_eq!(
                        next.rows(rows.start, block - dim).into_owned(),
                        prev.rows(rows.start + dim, block - dim).into_owned()
                    );
                }
                for (rows, dim) in [(l.uf_rows(), 1), (l.yf_rows(), 2)] {
                    let block = rows.len();
                    prop_assert_eq!(
                        next.rows(rows.start, block - dim).into_owned(),
                        prev.rows(rows.start + dim, block - dim).into_owned()
                    );
                }
                prop_assert_eq!(next[l.up_rows().end - 1], prev[l.uf_rows().start]);
                prop_assert_eq!(next[l.uf_rows().end - 1], 5000.0 + t as f64);
                prev = next;
            }
        }
    }
}
