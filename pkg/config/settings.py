"""
配置文件 - HOPC点云动作识别
"""
import os
from dotenv import load_dotenv

load_dotenv()

# ==================== 运行环境 ====================
HOPC_SEED = int(os.getenv('HOPC_SEED', '0'))
HOPC_WORKERS = int(os.getenv('HOPC_WORKERS', '4'))   # 深度帧并行解码线程数

# ==================== 尺度选择配置 ====================
SCALE_CONFIG = {
    'sigma': float(os.getenv('HOPC_SIGMA', '0.2')),  # r = sigma * 身高
    'tau_max_ratio': 0.2,            # tau_m = ceil(0.2 * n_f)
    'height_percentiles': (1.0, 99.0),
    'vertical_axis': 1,              # 竖直方向坐标轴（y）
    'spatial_mode': 'height',        # 'height' 或 'constant'
    'constant_radius': None,         # spatial_mode='constant' 时使用
    'temporal_mode': 'auto',         # 'auto' 或 'constant'
    'constant_tau': 2,
    'tie_tolerance': 1e-12,          # A(tau) 比较时的浮点容差
}

# ==================== STK检测配置 ====================
DETECTOR_CONFIG = {
    'theta_stk': 1.3,                # 特征值比阈值
    'nk': 400,                       # 最多保留的STK数量
    'nms_radius_ratio': 0.5,         # r' = 0.5 * r
    'nms_tau': 2,                    # tau'
    'quality_floor': 1e-6,           # eta <= 该值的候选点丢弃
    'stride': 1,                     # 候选点采样步长
    'canonical_quality': True,       # 在空间特征基下计算质量因子
}

# ==================== 描述子配置 ====================
DESCRIPTOR_CONFIG = {
    'vertex_mode': os.getenv('HOPC_VERTEX_MODE', 'normalized'),  # 'normalized' 或 'raw'
    'theta_l': 1.3,
    'grid': (2, 2, 3),               # n_x, n_y, n_t
    'holistic_grid': (6, 5, 3),
    'holistic_tau': 2,
    'holistic_stride': 1,
}

# ==================== STK-D配置 ====================
STKD_CONFIG = {
    'theta_g': 1.3,
    'mk_ratio': 0.05,                # m_k = ceil(0.05 * n_k)
    'min_keep': 10,                  # 迭代精炼的下限
    'normalization': 'axis',         # 'axis' 或 'isotropic'
    'l1': False,
}

# ==================== 码本配置 ====================
CODEBOOK_CONFIG = {
    'k': 1500,
    'seed': HOPC_SEED,
    'max_iter': 300,
}

# ==================== 分类器配置 ====================
CLASSIFIER_CONFIG = {
    'c': 1.0,
    'tol': 1e-4,                     # KKT违反容差
    'max_passes': 100000,
    'keep_fraction': 0.98,           # F-score保留比例
    'fscore_threshold': None,        # 设置后按阈值筛选
}

# ==================== 合成数据配置 ====================
SYNTH_CONFIG = {
    'frames': 24,
    'height': 1.75,
    'points_per_frame': 900,
    'distance': 3.0,                 # 主体到相机的距离（米）
    'noise': 0.0,
}

# ==================== 合成基准配置 ====================
BENCHMARK_CONFIG = {
    'classes': ['wave', 'punch', 'sit', 'raise'],
    'subjects': 5,
    'views': [0.0, 45.0, 90.0],      # 偏航角（度）
    'train_views': [0, 1],
    'test_views': [2],
    'k': 60,                         # 合成数据规模小，码本相应缩小
    'nk': 120,
    'frames': 20,
    'points_per_frame': 500,
    'stride': 2,                     # 候选点隔一个取一个
}

# ==================== 日志配置 ====================
LOG_CONFIG = {
    'log_dir': os.getenv('HOPC_LOG_DIR', 'logs'),
    'files': {
        'main': 'hopc_{date}.log',
        'events': 'hopc_events.jsonl',
    },
    'verbose': os.getenv('HOPC_VERBOSE', '1') != '0',
}


# ==================== 验证配置 ====================
def validate_config():
    """验证配置是否完整"""
    errors = []

    if not 0 < SCALE_CONFIG['sigma'] < 1:
        errors.append(f"[失败] sigma必须在(0,1)之间: {SCALE_CONFIG['sigma']}")
    if SCALE_CONFIG['spatial_mode'] not in ('height', 'constant'):
        errors.append(f"[失败] 未知的spatial_mode: {SCALE_CONFIG['spatial_mode']}")
    if SCALE_CONFIG['spatial_mode'] == 'constant' and not SCALE_CONFIG['constant_radius']:
        errors.append("[失败] spatial_mode=constant 需要设置 constant_radius")
    if SCALE_CONFIG['temporal_mode'] not in ('auto', 'constant'):
        errors.append(f"[失败] 未知的temporal_mode: {SCALE_CONFIG['temporal_mode']}")

    for name, value in (('theta_stk', DETECTOR_CONFIG['theta_stk']),
                        ('theta_l', DESCRIPTOR_CONFIG['theta_l']),
                        ('theta_g', STKD_CONFIG['theta_g'])):
        if value <= 1:
            errors.append(f"[失败] {name}必须大于1: {value}")

    if not 0 < DETECTOR_CONFIG['nms_radius_ratio'] < 1:
        errors.append("[失败] nms_radius_ratio必须在(0,1)之间")
    if DETECTOR_CONFIG['stride'] < 1:
        errors.append("[失败] stride必须 >= 1")
    if DETECTOR_CONFIG['quality_floor'] < 0:
        errors.append("[失败] quality_floor不能为负")

    if DESCRIPTOR_CONFIG['vertex_mode'] not in ('normalized', 'raw'):
        errors.append(f"[失败] 未知的vertex_mode: {DESCRIPTOR_CONFIG['vertex_mode']}")
    for key in ('grid', 'holistic_grid'):
        if any(n < 1 for n in DESCRIPTOR_CONFIG[key]):
            errors.append(f"[失败] {key}每一维必须 >= 1")

    if STKD_CONFIG['min_keep'] < 4:
        errors.append("[失败] min_keep必须 >= 4")
    if STKD_CONFIG['normalization'] not in ('axis', 'isotropic'):
        errors.append(f"[失败] 未知的normalization: {STKD_CONFIG['normalization']}")

    if not 0 < CLASSIFIER_CONFIG['keep_fraction'] <= 1:
        errors.append("[失败] keep_fraction必须在(0,1]之间")
    if CLASSIFIER_CONFIG['c'] <= 0:
        errors.append("[失败] 正则化参数C必须大于0")

    if errors:
        for error in errors:
            print(error)
        raise ValueError("配置验证失败！请检查config/settings.py或.env文件")

    return True


if __name__ == "__main__":
    validate_config()
    print("[完成] 配置验证通过")
