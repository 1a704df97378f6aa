use crate::crypto::{iv_blob_len, iv_max_plaintext, Cipher};
use crate::error::{Error, Result};

use super::TrieNode;

/// Nodes of `node_bytes` that fit one packed region of `region_bytes`.
pub fn pack_capacity(region_bytes: usize, node_bytes: usize) -> usize {
    iv_max_plaintext(region_bytes).map_or(0, |p| p / node_bytes)
}

/// Encrypts serialized nodes into one region: a random IV followed by the
/// CBC ciphertext of the nodes and zero fill. The plaintext always has the
/// same length, so every packed region has the same ciphertext size.
pub fn pack_raw(cipher: &Cipher, nodes: &[&[u8]], region_bytes: usize) -> Result<Vec<u8>> {
    let plain_len = iv_max_plaintext(region_bytes).unwrap_or(0);
    let used: usize = nodes.iter().map(|n| n.len()).sum();
    if used > plain_len {
        return Err(Error::Overflow {
            count: nodes.len(),
            node_bytes: nodes.first().map_or(0, |n| n.len()),
            capacity: plain_len,
        });
    }
    let mut plain = Vec::with_capacity(plain_len);
    for n in nodes {
        plain.extend_from_slice(n);
    }
    plain.resize(plain_len, 0);
    let mut out = cipher.iv_encrypt(&plain, region_bytes)?;
    out.resize(region_bytes, 0);
    Ok(out)
}

/// Inverse of [`pack_raw`]: the first `count` nodes of the region.
pub fn unpack_raw(cipher: &Cipher, region: &[u8], node_bytes: usize, count: usize) -> Result<Vec<Vec<u8>>> {
    let plain_len = iv_max_plaintext(region.len()).unwrap_or(0);
    let plain = cipher.iv_decrypt(&region[..iv_blob_len(plain_len)])?;
    if count * node_bytes > plain.len() {
        return Err(Error::Overflow { count, node_bytes, capacity: plain.len() });
    }
    Ok(plain.chunks_exact(node_bytes).take(count).map(<[u8]>::to_vec).collect())
}

pub fn pack_nodes(cipher: &Cipher, nodes: &[TrieNode], region_bytes: usize) -> Result<Vec<u8>> {
    let raw: Vec<Vec<u8>> = nodes.iter().map(TrieNode::to_bytes).collect();
    let refs: Vec<&[u8]> = raw.iter().map(Vec::as_slice).collect();
    pack_raw(cipher, &refs, region_bytes)
}

pub fn unpack_nodes(cipher: &Cipher, region: &[u8], b: u64, count: usize) -> Result<Vec<TrieNode>> {
    let node_bytes = b as usize * crate::woram::POINTER_BYTES;
    Ok(unpack_raw(cipher, region, node_bytes, count)?.iter().map(|n| TrieNode::from_bytes(n)).collect())
}
