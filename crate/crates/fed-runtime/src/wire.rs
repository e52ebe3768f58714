//! Length-prefixed binary messages for controller/learner exchange in
//! threaded mode.
//!
//! Frame: `u32le length | u8 tag | payload`, with tags 0x01 train_task,
//! 0x02 local_model, 0x03 eval_task, 0x04 metrics. Scalars are
//! little-endian; model parameters serialize as a name-table header
//! (tensor count, then per-tensor name, rank, and dims) followed by the
//! concatenated f64 arrays.

use fed_model::{ModelParams, NamedTensor, TrainBudget};
use thiserror::Error;

pub const TAG_TRAIN_TASK: u8 = 0x01;
pub const TAG_LOCAL_MODEL: u8 = 0x02;
pub const TAG_EVAL_TASK: u8 = 0x03;
pub const TAG_METRICS: u8 = 0x04;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WireError {
    #[error("frame truncated at byte {0}")]
    Truncated(usize),
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    TrainTask {
        round: u64,
        seed: u64,
        budget: TrainBudget,
        learning_rate: f64,
        batch_size: u64,
        params: ModelParams,
    },
    LocalModel {
        round: u64,
        learner: String,
        contribution: f64,
        steps_done: u64,
        busy_secs: f64,
        params: ModelParams,
    },
    EvalTask {
        round: u64,
        params: ModelParams,
    },
    Metrics {
        round: u64,
        learner: String,
        loss: Option<f64>,
        metric_value: Option<f64>,
        n: u64,
    },
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn string(&mut self, s: &str) {
        self.u16(s.len() as u16);
        self.buf.extend_from_slice(s.as_bytes());
    }

    fn opt_f64(&mut self, v: Option<f64>) {
        match v {
            Some(x) => {
                self.u8(1);
                self.f64(x);
            }
            None => self.u8(0),
        }
    }

    fn budget(&mut self, b: &TrainBudget) {
        match b {
            TrainBudget::Epochs { epochs } => {
                self.u8(0);
                self.u64(*epochs);
            }
            TrainBudget::Steps { steps } => {
                self.u8(1);
                self.u64(*steps);
            }
            TrainBudget::SimTime { seconds } => {
                self.u8(2);
                self.f64(*seconds);
            }
        }
    }

    fn params(&mut self, p: &ModelParams) {
        // name table first, float arrays after
        self.u32(p.tensors.len() as u32);
        for t in &p.tensors {
            self.string(&t.name);
            self.u8(t.shape.len() as u8);
            for &dim in &t.shape {
                self.u32(dim as u32);
            }
        }
        for t in &p.tensors {
            for &v in &t.values {
                self.f64(v);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.pos + n > self.buf.len() {
            return Err(WireError::Truncated(self.pos));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, WireError> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| WireError::Malformed(e.to_string()))
    }

    fn opt_f64(&mut self) -> Result<Option<f64>, WireError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(self.f64()?)),
            other => Err(WireError::Malformed(format!("bad option flag {other}"))),
        }
    }

    fn budget(&mut self) -> Result<TrainBudget, WireError> {
        match self.u8()? {
            0 => Ok(TrainBudget::Epochs {
                epochs: self.u64()?,
            }),
            1 => Ok(TrainBudget::Steps { steps: self.u64()? }),
            2 => Ok(TrainBudget::SimTime {
                seconds: self.f64()?,
            }),
            other => Err(WireError::Malformed(format!("bad budget kind {other}"))),
        }
    }

    fn params(&mut self) -> Result<ModelParams, WireError> {
        let count = self.u32()? as usize;
        let mut headers = Vec::with_capacity(count);
        for _ in 0..count {
            let name = self.string()?;
            let rank = self.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(self.u32()? as usize);
            }
            headers.push((name, shape));
        }
        let mut tensors = Vec::with_capacity(count);
        for (name, shape) in headers {
            let len: usize = shape.iter().product();
            let mut values = Vec::with_capacity(len);
            for _ in 0..len {
                values.push(self.f64()?);
            }
            tensors.push(NamedTensor {
                name,
                shape,
                values,
            });
        }
        Ok(ModelParams::new(tensors))
    }
}

/// Encode one message as a length-prefixed frame.
pub fn encode_message(message: &Message) -> Vec<u8> {
    let mut w = Writer::new();
    match message {
        Message::TrainTask {
            round,
            seed,
            budget,
            learning_rate,
            batch_size,
            params,
        } => {
            w.u8(TAG_TRAIN_TASK);
            w.u64(*round);
            w.u64(*seed);
            w.budget(budget);
            w.f64(*learning_rate);
            w.u64(*batch_size);
            w.params(params);
        }
        Message::LocalModel {
            round,
            learner,
            contribution,
            steps_done,
            busy_secs,
            params,
        } => {
            w.u8(TAG_LOCAL_MODEL);
            w.u64(*round);
            w.string(learner);
            w.f64(*contribution);
            w.u64(*steps_done);
            w.f64(*busy_secs);
            w.params(params);
        }
        Message::EvalTask { round, params } => {
            w.u8(TAG_EVAL_TASK);
            w.u64(*round);
            w.params(params);
        }
        Message::Metrics {
            round,
            learner,
            loss,
            metric_value,
            n,
        } => {
            w.u8(TAG_METRICS);
            w.u64(*round);
            w.string(learner);
            w.opt_f64(*loss);
            w.opt_f64(*metric_value);
            w.u64(*n);
        }
    }
    let mut frame = (w.buf.len() as u32).to_le_bytes().to_vec();
    frame.extend(w.buf);
    frame
}

/// Decode one frame, returning the message and the bytes consumed.
pub fn decode_message(bytes: &[u8]) -> Result<(Message, usize), WireError> {
    if bytes.len() < 4 {
        return Err(WireError::Truncated(0));
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() < 4 + len {
        return Err(WireError::Truncated(bytes.len()));
    }
    let mut r = Reader {
        buf: &bytes[4..4 + len],
        pos: 0,
    };
    let tag = r.u8()?;
    let message = match tag {
        TAG_TRAIN_TASK => Message::TrainTask {
            round: r.u64()?,
            seed: r.u64()?,
            budget: r.budget()?,
            learning_rate: r.f64()?,
            batch_size: r.u64()?,
            params: r.params()?,
        },
        TAG_LOCAL_MODEL => Message::LocalModel {
            round: r.u64()?,
            learner: r.string()?,
            contribution: r.f64()?,
            steps_done: r.u64()?,
            busy_secs: r.f64()?,
            params: r.params()?,
        },
        TAG_EVAL_TASK => Message::EvalTask {
            round: r.u64()?,
            params: r.params()?,
        },
        TAG_METRICS => Message::Metrics {
            round: r.u64()?,
            learner: r.string()?,
            loss: r.opt_f64()?,
            metric_value: r.opt_f64()?,
            n: r.u64()?,
        },
        other => return Err(WireError::UnknownTag(other)),
    };
    Ok((message, 4 + len))
}
