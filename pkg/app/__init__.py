"""人脸引导的盲超分：元训练、推理期自适应与评估。"""
