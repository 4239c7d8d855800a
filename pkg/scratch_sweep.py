"""Scratch: sweep generator nuisances, handshape-stream vs baseline only."""
import sys
import time

import numpy as np

from handshape_gnn import gnn, heads
from handshape_gnn.data import (
    LabelVocab, SyntheticSpec, generate_synthetic, selected_frames, split,
)
from handshape_gnn.rng import make_rng

vocab = LabelVocab.default()
hcfg = heads.HeadTrainingConfig(learning_rate=1e-3, weight_decay=1e-4, patience=25,
                                max_epochs=150, batch_size=32)

def run(noise, scale, hand_epochs=200, seed=0, rotation=0.0):
    spec = SyntheticSpec(classes=8, per_class=100, hold_frames=(3, 5),
                         transition_frames=(2, 4), noise=noise, rotation=rotation,
                         scale_jitter=scale, translation=0.2)
    seqs, _ = generate_synthetic(spec, make_rng(2024))
    ds = split(seqs, 0.8, seed=99)
    train_ids = set(ds.train_ids)
    train_seqs = [s for s in seqs if s.id in train_ids]
    val_seqs = [s for s in seqs if s.id not in train_ids]

    gcfg = gnn.GnnTrainingConfig(learning_rate=1e-3, weight_decay=1e-4, patience=20,
                                 max_epochs=hand_epochs, batch_size=32)
    frames_train = [(f, vocab.id_of(l)) for f, l in selected_frames(train_seqs)]
    t0 = time.time()
    hand_res = gnn.train_handshape_gnn(frames_train, gcfg, seed=seed)
    t_hand = time.time() - t0

    from handshape_gnn.frames import select_frame
    def feats(seq_list):
        hand_e, raw, y = [], [], []
        for s in seq_list:
            fr = s.frames[select_frame(s.frames)]
            hand_e.append(gnn.embed_frame(hand_res.model, fr))
            raw.append(gnn.raw_features(s))
            y.append(vocab.id_of(s.primary_handshape()))
        return np.array(hand_e), np.array(raw), np.array(y)

    tr_h, tr_r, y_tr = feats(train_seqs)
    va_h, va_r, y_va = feats(val_seqs)

    out = {}
    for kind, tr, va in (("baseline", tr_r, va_r), ("handshape", tr_h, va_h)):
        head = heads.make_head(kind, len(vocab), make_rng(seed, 5))
        heads.train_head(head, tr, y_tr, va, y_va, hcfg, seed)
        out[kind] = heads.accuracy(head, va, y_va)
    print(f"noise={noise:<5} scale={scale:<5} rot={rotation:<5} hand_ep={hand_res.best_epoch:>3} "
          f"({t_hand:3.0f}s): baseline {out['baseline']*100:5.1f}  "
          f"handshape {out['handshape']*100:5.1f}  gap {100*(out['handshape']-out['baseline']):+5.1f}")
    return out

for noise, scale in [(0.04, 0.15), (0.08, 0.15), (0.08, 0.45), (0.12, 0.45), (0.16, 0.45)]:
    run(noise, scale)
