use std::io::Write;

use crate::error::Result;

/// CSV of embeddings: `peer_id, episode_index, step_index, z_0 .. z_{d-1}`.
pub struct EmbeddingWriter<W: Write> {
    inner: csv::Writer<W>,
    d_z: usize,
}

impl<W: Write> EmbeddingWriter<W> {
    pub fn new(out: W, d_z: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header = vec!["peer_id".to_string(), "episode_index".into(), "step_index".into()];
        header.extend((0..d_z).map(|i| format!("z_{i}")));
        inner.write_record(&header)?;
        Ok(EmbeddingWriter { inner, d_z })
    }

    pub fn write(&mut self, peer_id: usize, episode: usize, step: usize, z: &[f64]) -> Result<()> {
        assert_eq!(z.len(), self.d_z);
        let mut rec = vec![peer_id.to_string(), episode.to_string(), step.to_string()];
        rec.extend(z.iter().map(|v| v.to_string()));
        self.inner.write_record(&rec)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        Ok(self.inner.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?)
    }
}
