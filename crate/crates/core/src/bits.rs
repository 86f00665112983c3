//! Fixed-width packed bit vectors and matrices.
//!
//! Matrix rows are `u64`-word bitsets so that the AND/OR vector-matrix
//! product runs word-parallel instead of bit-by-bit.

const WORD_BITS: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD_BITS)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVec {
    nbits: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(nbits: usize) -> Self {
        Self { nbits, words: vec![0; words_for(nbits)] }
    }

    pub fn len(&self) -> usize {
        self.nbits
    }

    pub fn is_empty(&self) -> bool {
        self.nbits == 0
    }

    pub fn set(&mut self, i: usize) {
        assert!(i < self.nbits, "bit index {i} out of range {}", self.nbits);
        self.words[i / WORD_BITS] |= 1u64 << (i % WORD_BITS);
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.nbits, "bit index {i} out of range {}", self.nbits);
        self.words[i / WORD_BITS] >> (i % WORD_BITS) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn any(&self) -> bool {
        self.words.iter().any(|w| *w != 0)
    }

    pub fn or_words(&mut self, words: &[u64]) {
        debug_assert_eq!(words.len(), self.words.len());
        for (dst, src) in self.words.iter_mut().zip(words) {
            *dst |= src;
        }
    }

    pub fn is_subset(&self, other: &BitVec) -> bool {
        assert_eq!(self.nbits, other.nbits);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nbits).filter(|i| self.get(*i))
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    row_words: usize,
    words: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let row_words = words_for(cols);
        Self { rows, cols, row_words, words: vec![0; rows * row_words] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn set(&mut self, row: usize, col: usize) {
        assert!(row < self.rows && col < self.cols);
        self.words[row * self.row_words + col / WORD_BITS] |= 1u64 << (col % WORD_BITS);
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        assert!(row < self.rows && col < self.cols);
        self.words[row * self.row_words + col / WORD_BITS] >> (col % WORD_BITS) & 1 == 1
    }

    pub fn row_words(&self, row: usize) -> &[u64] {
        &self.words[row * self.row_words..(row + 1) * self.row_words]
    }

    pub fn row_count_ones(&self, row: usize) -> usize {
        self.row_words(row).iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn set_row_all(&mut self, row: usize) {
        for col in 0..self.cols {
            self.set(row, col);
        }
    }

    pub fn iter_row_ones(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.cols).filter(move |c| self.get(row, *c))
    }

    /// `out(j) = OR over selected rows i of row(i)(j)`: the AND/OR product
    /// of a selection vector with this matrix.
    pub fn select_or(&self, selection: &BitVec) -> BitVec {
        assert_eq!(selection.len(), self.rows, "selection length must equal row count");
        let mut out = BitVec::zeros(self.cols);
        for i in selection.iter_ones() {
            out.or_words(self.row_words(i));
        }
        out
    }
}
