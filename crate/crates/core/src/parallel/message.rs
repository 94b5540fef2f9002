//! Messages exchanged between workers and the master, and the trace they leave.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::lma::SummaryTerms;

/// A participant in the protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Endpoint {
    Worker(usize),
    Master,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Worker(m) => write!(f, "w{m}"),
            Endpoint::Master => f.write_str("master"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    RbarBlock,
    LocalSummary,
    GlobalSummary,
    Prediction,
}

impl MessageKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MessageKind::RbarBlock => "rbar-block",
            MessageKind::LocalSummary => "local-summary",
            MessageKind::GlobalSummary => "global-summary",
            MessageKind::Prediction => "prediction",
        }
    }
}

/// Which residual block a matrix payload holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockCoord {
    /// `Rbar_{D_k U_n}`
    TrainTest { k: usize, n: usize },
    /// `Rbar_{D_j D_k}`
    TrainTrain { j: usize, k: usize },
}

#[derive(Debug, Clone)]
pub enum Payload {
    Rbar {
        coord: BlockCoord,
        block: DMatrix<f64>,
    },
    Local {
        terms: SummaryTerms,
        jitter: f64,
    },
    /// The slice of the global summary worker `m` needs.
    Global {
        y_s: DVector<f64>,
        y_u: DVector<f64>,
        ss: DMatrix<f64>,
        us: DMatrix<f64>,
        uu: DMatrix<f64>,
    },
    Prediction {
        mean: DVector<f64>,
        var: DVector<f64>,
        jitter: f64,
    },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Rbar { .. } => MessageKind::RbarBlock,
            Payload::Local { .. } => MessageKind::LocalSummary,
            Payload::Global { .. } => MessageKind::GlobalSummary,
            Payload::Prediction { .. } => MessageKind::Prediction,
        }
    }

    /// Shape of the main matrix, used in the trace.
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Payload::Rbar { block, .. } => block.shape(),
            Payload::Local { terms, .. } => terms.us.shape(),
            Payload::Global { us, .. } => us.shape(),
            Payload::Prediction { mean, .. } => (mean.len(), 2),
        }
    }

    /// Number of `f64` values carried.
    pub fn len_f64(&self) -> usize {
        match self {
            Payload::Rbar { block, .. } => block.len(),
            Payload::Local { terms, .. } => {
                let uu = match &terms.uu {
                    crate::lma::UuTerm::Full(m) => m.len(),
                    crate::lma::UuTerm::Blocks(b) => b.iter().map(|m| m.len()).sum(),
                    crate::lma::UuTerm::Diagonal(d) => d.len(),
                };
                terms.y_s.len() + terms.y_u.len() + terms.ss.len() + terms.us.len() + uu + 1
            }
            Payload::Global {
                y_s,
                y_u,
                ss,
                us,
                uu,
            } => y_s.len() + y_u.len() + ss.len() + us.len() + uu.len(),
            Payload::Prediction { mean, var, .. } => mean.len() + var.len() + 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Message {
    pub seq: u64,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub payload: Payload,
}

/// One line of the message trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub seq: u64,
    pub phase: String,
    pub kind: MessageKind,
    pub src: Endpoint,
    pub dst: Endpoint,
    pub rows: usize,
    pub cols: usize,
}

impl TraceEntry {
    /// `seq,kind,src,dst,rows,cols`
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.seq,
            self.kind.as_str(),
            self.src,
            self.dst,
            self.rows,
            self.cols
        )
    }
}

pub const TRACE_HEADER: &str = "seq,kind,src,dst,rows,cols";
