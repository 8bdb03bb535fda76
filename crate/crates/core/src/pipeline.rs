//! Image-level encryption: pad, encrypt, wrap in a container, and back.

use thiserror::Error;

use crate::cipher::{CipherError, PayloadCipher, BLOCK_LEN};
use crate::imageio::{pad_payload, unpad_payload, CipherContainer, ContainerError, ImageBuffer, ImageError};
use crate::keystream::Key128;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub fn encrypt_image(img: &ImageBuffer, key: &Key128, threads: usize) -> Result<CipherContainer, PipelineError> {
    let (mut payload, pad_len) = pad_payload(img.data());
    PayloadCipher::new(key, payload.len() / BLOCK_LEN)?.encrypt_in_place(&mut payload, threads)?;
    let dim = |v: usize| {
        u32::try_from(v).map_err(|_| ImageError::Invalid(format!("dimension {v} exceeds 32 bits")))
    };
    Ok(CipherContainer {
        width: dim(img.width())?,
        height: dim(img.height())?,
        channels: img.channels() as u8,
        pad_len: pad_len as u16,
        payload,
    })
}

pub fn decrypt_image(c: &CipherContainer, key: &Key128, threads: usize) -> Result<ImageBuffer, PipelineError> {
    c.validate()?;
    let mut payload = c.payload.clone();
    PayloadCipher::new(key, payload.len() / BLOCK_LEN)?.decrypt_in_place(&mut payload, threads)?;
    let data = unpad_payload(&payload, c.pad_len as usize)?;
    Ok(ImageBuffer::new(
        c.width as usize,
        c.height as usize,
        c.channels as usize,
        data,
    )?)
}
